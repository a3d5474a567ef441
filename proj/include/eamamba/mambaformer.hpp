#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "eamamba/mhssm.hpp"

namespace eamamba {

enum class MlpKind { none, ffn, gdfn, simple_ffn, channel_attention };

std::string to_string(MlpKind kind);
MlpKind parse_mlp_kind(std::string_view name);

// Channel MLP with hidden width h = round(expansion * C):
//   ffn                fc1 C->h, SiLU, fc2 h->C
//   gdfn               fc1 C->2h, 3x3 depthwise conv, SiLU(first half) * second half, fc2 h->C
//   simple_ffn         fc1 C->h, first half * second half, fc2 h/2->C
//   channel_attention  x * sigmoid(fc2(SiLU(fc1(avgpool(x)))))  with fc1 C->h, fc2 h->C
// All linear layers carry a bias.
template <typename T>
struct ChannelMlpParams {
  MlpKind kind = MlpKind::none;
  std::size_t channels = 0;
  std::size_t hidden = 0;
  Parameter<T> fc1_weight, fc1_bias;
  Parameter<T> dw_weight, dw_bias;  // gdfn only
  Parameter<T> fc2_weight, fc2_bias;

  static ChannelMlpParams init(const std::string& prefix, MlpKind kind, std::size_t channels,
                               double expansion, Rng& rng);

  template <typename F>
  void visit(F&& f) {
    if (kind == MlpKind::none) return;
    f(fc1_weight);
    f(fc1_bias);
    if (kind == MlpKind::gdfn) {
      f(dw_weight);
      f(dw_bias);
    }
    f(fc2_weight);
    f(fc2_bias);
  }
  std::size_t param_count() const;
};

template <typename T>
Var<T> channel_mlp(Var<T> x, ChannelMlpParams<T>& p);

// Pre-norm residual pair:
//   X'  = X  + MHSSM(LN(X))
//   X'' = X' + MLP(LN(X'))     (skipped for MlpKind::none)
template <typename T>
struct BlockParams {
  Parameter<T> norm1_gamma, norm1_beta;
  MhssmParams<T> mhssm;
  Parameter<T> norm2_gamma, norm2_beta;
  ChannelMlpParams<T> mlp;

  struct Options {
    double expansion = 2.0;
    std::size_t groups = 8;
    std::vector<CurveSpec> curves;
    std::size_t d_state = 16;
    MlpKind mlp_kind = MlpKind::simple_ffn;
    double mlp_expansion = 2.0;
  };

  static BlockParams init(const std::string& prefix, std::size_t channels, const Options& opt,
                          Rng& rng);

  template <typename F>
  void visit(F&& f) {
    f(norm1_gamma);
    f(norm1_beta);
    mhssm.visit(f);
    if (mlp.kind != MlpKind::none) {
      f(norm2_gamma);
      f(norm2_beta);
    }
    mlp.visit(f);
  }
  std::size_t param_count() const;
};

template <typename T>
Var<T> mambaformer_forward(Var<T> x, BlockParams<T>& p, CurveCache& cache);

}  // namespace eamamba
