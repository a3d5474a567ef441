#include "eamamba/train.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <sstream>

#include "eamamba/errors.hpp"
#include "eamamba/image_io.hpp"
#include "eamamba/metrics.hpp"
#include "eamamba/ops.hpp"
#include "eamamba/tensor_io.hpp"

namespace eamamba {

std::string to_string(const std::vector<Stage>& stages) {
  std::ostringstream os;
  for (std::size_t i = 0; i < stages.size(); ++i)
    os << (i ? ", " : "") << stages[i].patch << 'x' << stages[i].batch << '@' << stages[i].start;
  return os.str();
}

std::vector<Stage> parse_stages(std::string_view text) {
  std::vector<Stage> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    std::string item;
    for (char ch : text.substr(pos, comma - pos))
      if (ch != ' ' && ch != '\t') item += ch;
    pos = comma + 1;
    Stage s;
    const auto x = item.find('x'), at = item.find('@');
    auto num = [&](std::size_t b, std::size_t e, std::size_t& dst) {
      auto [p, ec] = std::from_chars(item.data() + b, item.data() + e, dst);
      return ec == std::errc{} && p == item.data() + e && e > b;
    };
    if (x == std::string::npos || at == std::string::npos || at < x || !num(0, x, s.patch) ||
        !num(x + 1, at, s.batch) || !num(at + 1, item.size(), s.start))
      throw ConfigError("stage '" + item + "': expected PATCHxBATCH@ITERATION");
    out.push_back(s);
  }
  if (out.empty()) throw ConfigError("stages: at least one stage is required");
  return out;
}

void TrainConfig::validate(const NetConfig& net) const {
  if (iterations == 0) throw ConfigError("iterations must be positive");
  if (!(lr_init >= 0.0) || !(lr_final >= 0.0)) throw ConfigError("learning rates must be nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("betas must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (stages.empty() || stages.front().start != 0)
    throw ConfigError("the first stage must start at iteration 0");
  const std::size_t m = net.pad_multiple();
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const Stage& s = stages[i];
    if (i > 0 && s.start <= stages[i - 1].start)
      throw ConfigError("stage start iterations must be strictly increasing");
    if (s.batch == 0 || s.patch == 0) throw ConfigError("stage patch and batch must be positive");
    if (s.patch % m != 0)
      throw ConfigError("stage patch " + std::to_string(s.patch) + " is not a multiple of " +
                        std::to_string(m));
  }
}

double TrainConfig::lr(std::size_t t) const {
  const double frac = double(std::min(t, iterations)) / double(iterations);
  return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + std::cos(std::numbers::pi * frac));
}

const Stage& TrainConfig::stage_at(std::size_t t) const {
  const Stage* s = &stages.front();
  for (const Stage& st : stages)
    if (st.start <= t) s = &st;
  return *s;
}

void AdamW::step(const std::vector<Parameter<float>*>& params, double lr) {
  if (m_.empty()) {
    for (const Parameter<float>* p : params) {
      m_.emplace_back(p->size(), 0.0f);
      v_.emplace_back(p->size(), 0.0f);
    }
  }
  if (m_.size() != params.size()) throw ContractError("AdamW: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  const float decay = static_cast<float>(1.0 - lr * weight_decay_);
  for (std::size_t k = 0; k < params.size(); ++k) {
    float* w = params[k]->value.data().data();
    const float* g = params[k]->grad.data().data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    const std::size_t n = params[k]->size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
      v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * double(g[i]) * g[i]);
      const double mh = m[i] / bc1, vh = v[i] / bc2;
      w[i] = static_cast<float>(w[i] * decay - lr * mh / (std::sqrt(vh) + eps_));
    }
  }
}

template <typename T>
Tensor<T> dihedral(const Tensor<T>& image, unsigned code) {
  if (image.rank() != 3) throw DimensionError("dihedral: expected [H, W, C]");
  const std::size_t H = image.extent(0), W = image.extent(1), C = image.extent(2);
  const bool hflip = code & 1u, vflip = code & 2u, transpose = code & 4u;
  const std::size_t oh = transpose ? W : H, ow = transpose ? H : W;
  Tensor<T> out({oh, ow, C});
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      std::size_t sr = transpose ? c : r, sc = transpose ? r : c;
      if (vflip) sr = H - 1 - sr;
      if (hflip) sc = W - 1 - sc;
      std::copy_n(image.data().data() + (sr * W + sc) * C, C, out.data().data() + (r * ow + c) * C);
    }
  return out;
}

template Tensor<float> dihedral(const Tensor<float>&, unsigned);
template Tensor<double> dihedral(const Tensor<double>&, unsigned);

void write_log_csv(std::ostream& os, const std::vector<LogRow>& log) {
  os << "iteration,lr,loss,patch,batch\n";
  char buf[160];
  for (const LogRow& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.9e,%.9e,%zu,%zu\n", r.iteration, r.lr, r.loss, r.patch,
                  r.batch);
    os << buf;
  }
}

namespace {

Tensor<float> crop_patch(const Tensor<float>& img, std::size_t top, std::size_t left,
                         std::size_t size) {
  const std::size_t W = img.extent(1), C = img.extent(2);
  Tensor<float> out({size, size, C});
  for (std::size_t r = 0; r < size; ++r)
    std::copy_n(img.data().data() + ((top + r) * W + left) * C, size * C,
                out.data().data() + r * size * C);
  return out;
}

void dump_batch(const std::filesystem::path& dir, std::size_t iteration,
                const std::vector<ImagePair>& batch) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::string stem = "iter" + std::to_string(iteration) + "_item" + std::to_string(i);
    save_eamt(dir / (stem + "_degraded.eamt"), batch[i].degraded);
    save_eamt(dir / (stem + "_clean.eamt"), batch[i].clean);
  }
}

}  // namespace

std::vector<LogRow> train(RestorationNet<float>& net, const std::vector<ImagePair>& data,
                          const TrainConfig& cfg, const TrainOptions& opt) {
  cfg.validate(net.config);
  if (data.empty()) throw ConfigError("train: empty dataset");
  for (const Stage& s : cfg.stages)
    for (const ImagePair& p : data)
      if (p.clean.extent(0) < s.patch || p.clean.extent(1) < s.patch)
        throw ConfigError("train: patch " + std::to_string(s.patch) +
                          " larger than a training image");

  Rng rng(cfg.seed);
  AdamW optimizer(cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
  const std::vector<Parameter<float>*> params = net.parameters();
  std::vector<LogRow> log;
  log.reserve(cfg.iterations);

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Stage& stage = cfg.stage_at(it);
    const double lr = cfg.lr(it);
    std::vector<ImagePair> batch;
    batch.reserve(stage.batch);
    for (std::size_t b = 0; b < stage.batch; ++b) {
      const ImagePair& src = data[std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng)];
      const std::size_t H = src.clean.extent(0), W = src.clean.extent(1);
      const std::size_t top = std::uniform_int_distribution<std::size_t>(0, H - stage.patch)(rng);
      const std::size_t left = std::uniform_int_distribution<std::size_t>(0, W - stage.patch)(rng);
      const unsigned code = cfg.augment ? std::uniform_int_distribution<unsigned>(0, 7)(rng) : 0;
      batch.push_back({dihedral(crop_patch(src.clean, top, left, stage.patch), code),
                       dihedral(crop_patch(src.degraded, top, left, stage.patch), code)});
    }

    for (Parameter<float>* p : params) p->zero_grad();
    double loss_sum = 0.0;
    try {
      for (const ImagePair& item : batch) {
        Graph<float> g;
        Var<float> out = forward(net, g.constant(item.degraded));
        Var<float> loss = l1_loss(out, g.constant(item.clean));
        loss_sum += loss.value()[0];
        g.backward(scale(loss, 1.0f / float(stage.batch)));
      }
      for (const Parameter<float>* p : params)
        if (!p->grad.all_finite())
          throw NumericError("non-finite gradient for '" + p->name + "'");
    } catch (const NumericError& e) {
      dump_batch(opt.dump_dir, it, batch);
      throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
    }
    const double loss = loss_sum / double(stage.batch);
    if (!std::isfinite(loss)) {
      dump_batch(opt.dump_dir, it, batch);
      throw NumericError("iteration " + std::to_string(it) + ": non-finite loss");
    }
    optimizer.step(params, lr);
    log.push_back({it, lr, loss, stage.patch, stage.batch});
    if (opt.on_step) opt.on_step(log.back());
  }
  return log;
}

EvalResult evaluate(RestorationNet<float>& net, const std::vector<ImagePair>& data) {
  if (data.empty()) throw ConfigError("evaluate: empty dataset");
  EvalResult r;
  for (const ImagePair& p : data) {
    Tensor<float> out = infer(net, p.degraded);
    for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
    r.noisy_psnr += psnr(p.degraded, p.clean);
    r.restored_psnr += psnr(out, p.clean);
    r.restored_ssim += ssim(out, p.clean);
  }
  const double n = double(data.size());
  r.noisy_psnr /= n;
  r.restored_psnr /= n;
  r.restored_ssim /= n;
  return r;
}

}  // namespace eamamba
