#include "eamamba/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "eamamba/errors.hpp"

namespace eamamba {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_size(const std::string& key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("'" + key + "': expected a nonnegative integer, got '" + std::string(v) + "'");
  return out;
}

double to_double(const std::string& key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("'" + key + "': expected a number, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::size_t> to_size_list(const std::string& key, std::string_view v) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const auto comma = v.find(',', pos);
    const std::string item =
        trim(v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    out.push_back(to_size(key, item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

const std::set<std::string, std::less<>> kNetKeys{
    "base_channels", "level_blocks",  "refinement_blocks", "expansion", "groups",
    "scan_set",      "mlp_kind",      "mlp_expansion",     "d_state",   "simplified_bbar"};

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second)
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

NetConfig net_config_from(const std::map<std::string, std::string>& kv) {
  NetConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "base_channels") c.base_channels = to_size(k, v);
    else if (k == "level_blocks") c.level_blocks = to_size_list(k, v);
    else if (k == "refinement_blocks") c.refinement_blocks = to_size(k, v);
    else if (k == "expansion") c.expansion = to_double(k, v);
    else if (k == "groups") c.groups = to_size(k, v);
    else if (k == "scan_set") c.scan_set = v;
    else if (k == "mlp_kind") c.mlp_kind = parse_mlp_kind(v);
    else if (k == "mlp_expansion") c.mlp_expansion = to_double(k, v);
    else if (k == "d_state") c.d_state = to_size(k, v);
    else if (k == "simplified_bbar") c.simplified_bbar = to_bool(k, v);
    else throw ConfigError("unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

std::string to_config_text(const NetConfig& c) {
  std::ostringstream os;
  os << "base_channels = " << c.base_channels << '\n' << "level_blocks = ";
  for (std::size_t i = 0; i < c.level_blocks.size(); ++i)
    os << (i ? "," : "") << c.level_blocks[i];
  os << '\n'
     << "refinement_blocks = " << c.refinement_blocks << '\n'
     << "expansion = " << format_double(c.expansion) << '\n'
     << "groups = " << c.groups << '\n'
     << "scan_set = " << c.scan_set << '\n'
     << "mlp_kind = " << to_string(c.mlp_kind) << '\n'
     << "mlp_expansion = " << format_double(c.mlp_expansion) << '\n'
     << "d_state = " << c.d_state << '\n'
     << "simplified_bbar = " << (c.simplified_bbar ? "true" : "false") << '\n';
  return os.str();
}

void RunConfig::validate() const {
  net.validate();
  train.validate(net);
  for (const SynthSpec* s : {&train_data, &val_data}) {
    if (s->count == 0) throw ConfigError("dataset counts must be positive");
    if (s->sigma < 0.0) throw ConfigError("sigma must be nonnegative");
  }
  for (const Stage& st : train.stages)
    if (st.patch > train_data.height || st.patch > train_data.width)
      throw ConfigError("stage patch " + std::to_string(st.patch) +
                        " exceeds the training image size");
}

RunConfig parse_run_config(std::istream& is) {
  const auto kv = parse_key_values(is);
  RunConfig rc;
  std::map<std::string, std::string> net_kv;
  for (const auto& [k, v] : kv) {
    if (kNetKeys.contains(k)) net_kv.emplace(k, v);
    else if (k == "iterations") rc.train.iterations = to_size(k, v);
    else if (k == "lr_init") rc.train.lr_init = to_double(k, v);
    else if (k == "lr_final") rc.train.lr_final = to_double(k, v);
    else if (k == "beta1") rc.train.beta1 = to_double(k, v);
    else if (k == "beta2") rc.train.beta2 = to_double(k, v);
    else if (k == "weight_decay") rc.train.weight_decay = to_double(k, v);
    else if (k == "stages") rc.train.stages = parse_stages(v);
    else if (k == "augment") rc.train.augment = to_bool(k, v);
    else if (k == "seed") rc.train.seed = to_size(k, v);
    else if (k == "sigma") rc.train_data.sigma = rc.val_data.sigma = to_double(k, v);
    else if (k == "train_count") rc.train_data.count = to_size(k, v);
    else if (k == "train_size") rc.train_data.height = rc.train_data.width = to_size(k, v);
    else if (k == "val_count") rc.val_data.count = to_size(k, v);
    else if (k == "val_size") rc.val_data.height = rc.val_data.width = to_size(k, v);
    else if (k == "data_seed") {
      rc.train_data.seed = to_size(k, v);
      rc.val_data.seed = rc.train_data.seed + 1;
    } else {
      throw ConfigError("unknown key '" + k + "'");
    }
  }
  rc.net = net_config_from(net_kv);
  rc.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_run_config(f);
}

}  // namespace eamamba
