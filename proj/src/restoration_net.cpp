#include "eamamba/restoration_net.hpp"

#include <cmath>

#include "eamamba/errors.hpp"
#include "eamamba/ops.hpp"

namespace eamamba {

std::vector<CurveSpec> NetConfig::scan_set_curves(const std::string& name) {
  try {
    auto curves = eamamba::scan_set(name);
    if (curves.empty()) throw ConfigError("empty scan set");
    return curves;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("invalid scan_set '" + name + "': " + e.what());
  }
}

NetConfig NetConfig::tiny() {
  NetConfig c;
  c.base_channels = 16;
  c.level_blocks = {1, 1, 1, 1};
  c.refinement_blocks = 1;
  c.expansion = 2.0;
  c.groups = 8;
  c.scan_set = "all_around";
  return c;
}

void NetConfig::validate() const {
  if (base_channels == 0) throw ConfigError("base_channels must be positive");
  if (level_blocks.empty()) throw ConfigError("level_blocks must list at least one level");
  if (level_blocks.size() > 6) throw ConfigError("at most 6 levels are supported");
  if (groups == 0) throw ConfigError("groups must be positive");
  if (d_state == 0) throw ConfigError("d_state must be positive");
  if (!(expansion > 0.0)) throw ConfigError("expansion must be positive");
  if (mlp_kind != MlpKind::none && !(mlp_expansion > 0.0))
    throw ConfigError("mlp_expansion must be positive");
  curves();
  for (std::size_t l = 0; l < levels(); ++l) {
    const std::size_t w = width(l);
    const std::size_t inner = expanded_channels(w, expansion);
    if (inner % groups != 0)
      throw ConfigError("level " + std::to_string(l) + ": " + std::to_string(inner) +
                        " scan channels are not divisible into " + std::to_string(groups) +
                        " groups");
    if (mlp_kind == MlpKind::simple_ffn && expanded_channels(w, mlp_expansion) % 2 != 0)
      throw ConfigError("level " + std::to_string(l) + ": simple_ffn hidden width must be even");
  }
}

template <typename T>
Tensor<T> identity_like(std::size_t in, std::size_t out) {
  Tensor<T> w({in, out});
  const std::size_t m = std::min(in, out);
  const T v = static_cast<T>(std::sqrt(std::min(1.0, double(in) / double(out))));
  for (std::size_t i = 0; i < in; ++i)
    for (std::size_t j = 0; j < out; ++j)
      if (i % m == j % m) w[i * out + j] = v;
  return w;
}

template <typename T>
Var<T> downsample(Var<T> x, Var<T> weight) {
  return linear(space_to_depth(x), weight);
}

template <typename T>
Var<T> upsample(Var<T> x, Var<T> weight) {
  return depth_to_space(linear(x, weight));
}

template <typename T>
Var<T> skip_merge(Var<T> decoder_x, Var<T> encoder_skip, Var<T> weight) {
  const Var<T> parts[] = {decoder_x, encoder_skip};
  return linear(concat_channels<T>(parts), weight);
}

template <typename T>
RestorationNet<T> build_network(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  RestorationNet<T> net;
  net.config = cfg;
  const std::size_t C = cfg.base_channels, levels = cfg.levels();
  typename BlockParams<T>::Options opt;
  opt.expansion = cfg.expansion;
  opt.groups = cfg.groups;
  opt.curves = cfg.curves();
  opt.d_state = cfg.d_state;
  opt.mlp_kind = cfg.mlp_kind;
  opt.mlp_expansion = cfg.mlp_expansion;

  auto blocks = [&](const std::string& prefix, std::size_t count, std::size_t width) {
    std::vector<BlockParams<T>> out;
    for (std::size_t b = 0; b < count; ++b) {
      out.push_back(BlockParams<T>::init(prefix + ".block" + std::to_string(b), width, opt, rng));
      for (auto& g : out.back().mhssm.mhss.group_params) g.simplified_bbar = cfg.simplified_bbar;
    }
    return out;
  };

  net.embed_weight = Parameter<T>("embed.weight", trunc_normal<T>({3, 3, 3, C}, 0.02, rng));
  net.embed_bias = Parameter<T>("embed.bias", Tensor<T>::zeros({C}));
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    const std::size_t w = cfg.width(l);
    const std::string lvl = std::to_string(l);
    net.encoder.push_back(blocks("encoder" + lvl, cfg.level_blocks[l], w));
    net.down.emplace_back("down" + lvl, identity_like<T>(4 * w, 2 * w));
  }
  net.bottleneck = blocks("bottleneck", cfg.level_blocks[levels - 1], cfg.width(levels - 1));
  net.up.resize(levels - 1);
  net.merge.resize(levels - 1);
  net.decoder.resize(levels - 1);
  for (std::size_t l = levels - 1; l-- > 0;) {
    const std::size_t w = cfg.width(l);
    const std::string lvl = std::to_string(l);
    net.up[l] = Parameter<T>("up" + lvl, identity_like<T>(2 * w, 4 * w));
    net.merge[l] = Parameter<T>("merge" + lvl, identity_like<T>(2 * w, w));
    net.decoder[l] = blocks("decoder" + lvl, cfg.level_blocks[l], w);
  }
  net.refinement = blocks("refinement", cfg.refinement_blocks, C);
  net.out_weight = Parameter<T>("output.weight", trunc_normal<T>({3, 3, C, 3}, 0.02, rng));
  net.out_bias = Parameter<T>("output.bias", Tensor<T>::zeros({3}));
  return net;
}

template <typename T>
std::vector<Parameter<T>*> RestorationNet<T>::parameters() {
  std::vector<Parameter<T>*> out;
  visit([&](Parameter<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
std::size_t RestorationNet<T>::param_count() {
  std::size_t n = 0;
  visit([&](Parameter<T>& p) { n += p.size(); });
  return n;
}

template <typename T>
void RestorationNet<T>::zero_output_projections() {
  auto zero_block = [](BlockParams<T>& b) {
    b.mhssm.out_proj.value.fill(T(0));
    if (b.mlp.kind != MlpKind::none && b.mlp.kind != MlpKind::channel_attention) {
      b.mlp.fc2_weight.value.fill(T(0));
      b.mlp.fc2_bias.value.fill(T(0));
    }
  };
  for (auto& lvl : encoder)
    for (auto& b : lvl) zero_block(b);
  for (auto& b : bottleneck) zero_block(b);
  for (auto& lvl : decoder)
    for (auto& b : lvl) zero_block(b);
  for (auto& b : refinement) zero_block(b);
  out_weight.value.fill(T(0));
  out_bias.value.fill(T(0));
}

template <typename T>
template <typename U>
RestorationNet<U> RestorationNet<T>::cast() const {
  RestorationNet<T> copy = *this;
  RestorationNet<U> out = build_network<U>(config, 0);
  std::vector<Parameter<T>*> src = copy.parameters();
  std::vector<Parameter<U>*> dst = out.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i]->value = src[i]->value.template cast<U>();
    dst[i]->grad = Tensor<U>::zeros(dst[i]->value.shape());
  }
  return out;
}

template <typename T>
Var<T> forward(RestorationNet<T>& net, Var<T> image) {
  Graph<T>& g = image.graph();
  const Shape& s = image.shape();
  if (s.size() != 3 || s[2] != 3)
    throw DimensionError("forward: expected an [H, W, 3] image, got " + shape_str(s));
  const std::size_t H = s[0], W = s[1], m = net.config.pad_multiple();
  const std::size_t Hp = (H + m - 1) / m * m, Wp = (W + m - 1) / m * m;
  const bool padded = Hp != H || Wp != W;
  Var<T> x = padded ? reflect_pad(image, Hp, Wp) : image;

  Var<T> f = conv2d<T>(x, g.parameter(net.embed_weight), g.parameter(net.embed_bias));
  std::vector<Var<T>> skips;
  for (std::size_t l = 0; l < net.encoder.size(); ++l) {
    for (auto& b : net.encoder[l]) f = mambaformer_forward(f, b, net.cache);
    skips.push_back(f);
    f = downsample(f, g.parameter(net.down[l]));
  }
  for (auto& b : net.bottleneck) f = mambaformer_forward(f, b, net.cache);
  for (std::size_t l = net.decoder.size(); l-- > 0;) {
    f = upsample(f, g.parameter(net.up[l]));
    f = skip_merge(f, skips[l], g.parameter(net.merge[l]));
    for (auto& b : net.decoder[l]) f = mambaformer_forward(f, b, net.cache);
  }
  for (auto& b : net.refinement) f = mambaformer_forward(f, b, net.cache);
  Var<T> r = conv2d<T>(f, g.parameter(net.out_weight), g.parameter(net.out_bias));
  if (padded) r = crop(r, H, W);
  return add(image, r);
}

template <typename T>
Tensor<T> infer(RestorationNet<T>& net, const Tensor<T>& image) {
  Graph<T> g(false);
  return forward(net, g.constant(image)).value();
}

#define EAMAMBA_INSTANTIATE_NET(T)                                          \
  template struct RestorationNet<T>;                                        \
  template RestorationNet<T> build_network<T>(const NetConfig&, std::uint64_t); \
  template Var<T> forward(RestorationNet<T>&, Var<T>);                      \
  template Tensor<T> infer(RestorationNet<T>&, const Tensor<T>&);           \
  template Var<T> downsample(Var<T>, Var<T>);                               \
  template Var<T> upsample(Var<T>, Var<T>);                                 \
  template Var<T> skip_merge(Var<T>, Var<T>, Var<T>);                       \
  template Tensor<T> identity_like<T>(std::size_t, std::size_t);

EAMAMBA_INSTANTIATE_NET(float)
EAMAMBA_INSTANTIATE_NET(double)

template RestorationNet<double> RestorationNet<float>::cast<double>() const;
template RestorationNet<float> RestorationNet<double>::cast<float>() const;

}  // namespace eamamba
