#include "eamamba/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "eamamba/config.hpp"
#include "eamamba/errors.hpp"
#include "eamamba/tensor_io.hpp"

namespace eamamba {

void save_checkpoint(const std::filesystem::path& dir, RestorationNet<float>& net) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "[config]\n" << to_config_text(net.config) << "\n[params]\n";
  for (Parameter<float>* p : net.parameters()) {
    const std::string file = p->name + ".eamt";
    save_eamt(dir / file, p->value);
    manifest << p->name << " = " << file << '\n';
  }
  std::ofstream f(dir / "manifest.txt", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write manifest in '" + dir.string() + "'");
  f << manifest.str();
}

RestorationNet<float> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.txt");
  if (!f) throw ConfigError("no manifest.txt in '" + dir.string() + "'");
  std::ostringstream config, params;
  std::ostringstream* section = nullptr;
  std::string line;
  while (std::getline(f, line)) {
    if (line == "[config]") section = &config;
    else if (line == "[params]") section = &params;
    else if (section) *section << line << '\n';
    else if (!line.empty()) throw ConfigError("manifest: content before the first section");
  }
  std::istringstream cs(config.str()), ps(params.str());
  const NetConfig cfg = net_config_from(parse_key_values(cs));
  std::map<std::string, std::string> files = parse_key_values(ps);

  RestorationNet<float> net = build_network<float>(cfg, 0);
  for (Parameter<float>* p : net.parameters()) {
    auto it = files.find(p->name);
    if (it == files.end()) throw ConfigError("manifest: missing parameter '" + p->name + "'");
    Tensor<float> t = load_eamt(dir / it->second);
    if (t.shape() != p->value.shape())
      throw ConfigError("checkpoint: '" + p->name + "' has shape " + shape_str(t.shape()) +
                        ", expected " + shape_str(p->value.shape()));
    p->value = std::move(t);
    p->zero_grad();
    files.erase(it);
  }
  if (!files.empty())
    throw ConfigError("manifest: unknown parameter '" + files.begin()->first + "'");
  return net;
}

}  // namespace eamamba
