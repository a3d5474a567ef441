#include "eamamba/mambaformer.hpp"

#include "eamamba/errors.hpp"
#include "eamamba/ops.hpp"

namespace eamamba {

std::string to_string(MlpKind kind) {
  switch (kind) {
    case MlpKind::none: return "none";
    case MlpKind::ffn: return "ffn";
    case MlpKind::gdfn: return "gdfn";
    case MlpKind::simple_ffn: return "simple_ffn";
    case MlpKind::channel_attention: return "channel_attention";
  }
  return "none";
}

MlpKind parse_mlp_kind(std::string_view name) {
  for (MlpKind k : {MlpKind::none, MlpKind::ffn, MlpKind::gdfn, MlpKind::simple_ffn,
                    MlpKind::channel_attention})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown channel MLP kind '" + std::string(name) + "'");
}

template <typename T>
ChannelMlpParams<T> ChannelMlpParams<T>::init(const std::string& prefix, MlpKind kind,
                                              std::size_t channels, double expansion, Rng& rng) {
  ChannelMlpParams p;
  p.kind = kind;
  p.channels = channels;
  if (kind == MlpKind::none) return p;
  const std::size_t h = expanded_channels(channels, expansion);
  if (kind == MlpKind::simple_ffn && h % 2 != 0)
    throw ConfigError("simple_ffn needs an even hidden width, got " + std::to_string(h));
  p.hidden = h;
  const std::size_t fc1_out = kind == MlpKind::gdfn ? 2 * h : h;
  const std::size_t fc2_in = kind == MlpKind::simple_ffn ? h / 2 : h;
  p.fc1_weight = Parameter<T>(prefix + ".fc1_weight", trunc_normal<T>({channels, fc1_out}, 0.02, rng));
  p.fc1_bias = Parameter<T>(prefix + ".fc1_bias", Tensor<T>::zeros({fc1_out}));
  if (kind == MlpKind::gdfn) {
    p.dw_weight = Parameter<T>(prefix + ".dw_weight", trunc_normal<T>({3, 3, fc1_out}, 0.02, rng));
    p.dw_bias = Parameter<T>(prefix + ".dw_bias", Tensor<T>::zeros({fc1_out}));
  }
  p.fc2_weight = Parameter<T>(prefix + ".fc2_weight", trunc_normal<T>({fc2_in, channels}, 0.02, rng));
  p.fc2_bias = Parameter<T>(prefix + ".fc2_bias", Tensor<T>::zeros({channels}));
  return p;
}

template <typename T>
std::size_t ChannelMlpParams<T>::param_count() const {
  if (kind == MlpKind::none) return 0;
  return fc1_weight.size() + fc1_bias.size() + dw_weight.size() + dw_bias.size() +
         fc2_weight.size() + fc2_bias.size();
}

template <typename T>
Var<T> channel_mlp(Var<T> x, ChannelMlpParams<T>& p) {
  Graph<T>& g = x.graph();
  if (p.kind == MlpKind::none) return x;
  if (x.shape().size() != 3 || x.shape()[2] != p.channels)
    throw DimensionError("channel_mlp: input " + shape_str(x.shape()) + " does not have " +
                         std::to_string(p.channels) + " channels");
  auto fc1 = [&](Var<T> v) {
    return linear<T>(v, g.parameter(p.fc1_weight), g.parameter(p.fc1_bias));
  };
  auto fc2 = [&](Var<T> v) {
    return linear<T>(v, g.parameter(p.fc2_weight), g.parameter(p.fc2_bias));
  };
  const std::size_t h = p.hidden;
  switch (p.kind) {
    case MlpKind::ffn:
      return fc2(silu(fc1(x)));
    case MlpKind::gdfn: {
      Var<T> v = dwconv2d<T>(fc1(x), g.parameter(p.dw_weight), g.parameter(p.dw_bias));
      return fc2(mul(silu(slice_channels(v, 0, h)), slice_channels(v, h, h)));
    }
    case MlpKind::simple_ffn: {
      Var<T> v = fc1(x);
      return fc2(mul(slice_channels(v, 0, h / 2), slice_channels(v, h / 2, h / 2)));
    }
    case MlpKind::channel_attention: {
      Var<T> s = sigmoid(fc2(silu(fc1(global_avg_pool(x)))));
      return scale_channels(x, s);
    }
    case MlpKind::none:
      break;
  }
  return x;
}

template <typename T>
BlockParams<T> BlockParams<T>::init(const std::string& prefix, std::size_t channels,
                                    const Options& opt, Rng& rng) {
  BlockParams p;
  p.norm1_gamma = Parameter<T>(prefix + ".norm1_gamma", Tensor<T>::ones({channels}));
  p.norm1_beta = Parameter<T>(prefix + ".norm1_beta", Tensor<T>::zeros({channels}));
  p.mhssm = MhssmParams<T>::init(prefix + ".mhssm", channels, opt.expansion, opt.groups, opt.curves,
                                 opt.d_state, rng);
  if (opt.mlp_kind != MlpKind::none) {
    p.norm2_gamma = Parameter<T>(prefix + ".norm2_gamma", Tensor<T>::ones({channels}));
    p.norm2_beta = Parameter<T>(prefix + ".norm2_beta", Tensor<T>::zeros({channels}));
  }
  p.mlp = ChannelMlpParams<T>::init(prefix + ".mlp", opt.mlp_kind, channels, opt.mlp_expansion, rng);
  return p;
}

template <typename T>
std::size_t BlockParams<T>::param_count() const {
  return norm1_gamma.size() + norm1_beta.size() + mhssm.param_count() + norm2_gamma.size() +
         norm2_beta.size() + mlp.param_count();
}

template <typename T>
Var<T> mambaformer_forward(Var<T> x, BlockParams<T>& p, CurveCache& cache) {
  Graph<T>& g = x.graph();
  Var<T> n1 = layer_norm(x, g.parameter(p.norm1_gamma), g.parameter(p.norm1_beta));
  Var<T> x1 = add(x, mhssm_forward(n1, p.mhssm, cache));
  if (p.mlp.kind == MlpKind::none) return x1;
  Var<T> n2 = layer_norm(x1, g.parameter(p.norm2_gamma), g.parameter(p.norm2_beta));
  return add(x1, channel_mlp(n2, p.mlp));
}

#define EAMAMBA_INSTANTIATE_BLOCK(T)                                   \
  template struct ChannelMlpParams<T>;                                 \
  template struct BlockParams<T>;                                      \
  template Var<T> channel_mlp(Var<T>, ChannelMlpParams<T>&);           \
  template Var<T> mambaformer_forward(Var<T>, BlockParams<T>&, CurveCache&);

EAMAMBA_INSTANTIATE_BLOCK(float)
EAMAMBA_INSTANTIATE_BLOCK(double)

}  // namespace eamamba
