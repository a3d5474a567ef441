#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "eamamba/mambaformer.hpp"

namespace eamamba {

struct NetConfig {
  std::size_t base_channels = 64;
  std::vector<std::size_t> level_blocks{4, 6, 6, 7};
  std::size_t refinement_blocks = 2;
  double expansion = 2.0;
  std::size_t groups = 8;
  std::string scan_set = "all_around";
  MlpKind mlp_kind = MlpKind::simple_ffn;
  double mlp_expansion = 2.0;
  std::size_t d_state = 16;
  bool simplified_bbar = false;

  // Throws ConfigError on any inconsistency (group divisibility at every
  // level width, odd simple_ffn widths, unknown curves, empty levels).
  void validate() const;

  std::size_t levels() const { return level_blocks.size(); }
  std::size_t width(std::size_t level) const { return base_channels << level; }
  // Input extents are padded to a multiple of this.
  std::size_t pad_multiple() const { return std::size_t{1} << (levels() - 1); }
  std::vector<CurveSpec> curves() const { return scan_set_curves(scan_set); }

  static std::vector<CurveSpec> scan_set_curves(const std::string& name);
  static NetConfig tiny();

  bool operator==(const NetConfig&) const = default;
};

// UNet of MambaFormer blocks. Level i runs at width C * 2^i; the last level
// is the bottleneck. Resampling is a 2x2 pixel (un)shuffle plus a bias-free
// linear map; skips are merged by concatenation and a bias-free linear map.
template <typename T>
struct RestorationNet {
  NetConfig config;
  Parameter<T> embed_weight, embed_bias;    // 3x3 conv 3 -> C
  std::vector<std::vector<BlockParams<T>>> encoder;  // levels - 1
  std::vector<Parameter<T>> down;           // [4w, 2w]
  std::vector<BlockParams<T>> bottleneck;
  std::vector<Parameter<T>> up;             // [2w, 4w] at level i + 1 -> w
  std::vector<Parameter<T>> merge;          // [2w, w]
  std::vector<std::vector<BlockParams<T>>> decoder;  // levels - 1, by level
  std::vector<BlockParams<T>> refinement;
  Parameter<T> out_weight, out_bias;        // 3x3 conv C -> 3
  CurveCache cache;

  template <typename F>
  void visit(F&& f) {
    f(embed_weight);
    f(embed_bias);
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      for (auto& b : encoder[i]) b.visit(f);
      f(down[i]);
    }
    for (auto& b : bottleneck) b.visit(f);
    for (std::size_t i = decoder.size(); i-- > 0;) {
      f(up[i]);
      f(merge[i]);
      for (auto& b : decoder[i]) b.visit(f);
    }
    for (auto& b : refinement) b.visit(f);
    f(out_weight);
    f(out_bias);
  }

  std::vector<Parameter<T>*> parameters();
  std::size_t param_count();

  // Zeroes the block token-mixer projections, the channel-MLP output layers
  // and the output convolution; the network then returns its input.
  void zero_output_projections();

  template <typename U>
  RestorationNet<U> cast() const;
};

// Deterministic in (cfg, seed).
template <typename T>
RestorationNet<T> build_network(const NetConfig& cfg, std::uint64_t seed);

// image [H, W, 3] -> [H, W, 3]; reflection-pads to pad_multiple and crops back.
template <typename T>
Var<T> forward(RestorationNet<T>& net, Var<T> image);

// Gradient-free forward on a fresh graph.
template <typename T>
Tensor<T> infer(RestorationNet<T>& net, const Tensor<T>& image);

// Building blocks, exposed for testing.
template <typename T>
Var<T> downsample(Var<T> x, Var<T> weight);
template <typename T>
Var<T> upsample(Var<T> x, Var<T> weight);
template <typename T>
Var<T> skip_merge(Var<T> decoder_x, Var<T> encoder_skip, Var<T> weight);

// W[i, j] = sqrt(min(1, in / out)) where i == j (mod min(in, out)), else 0.
template <typename T>
Tensor<T> identity_like(std::size_t in, std::size_t out);

}  // namespace eamamba
