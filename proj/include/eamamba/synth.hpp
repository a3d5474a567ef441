#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "eamamba/random.hpp"
#include "eamamba/tensor.hpp"

namespace eamamba {

struct SynthSpec {
  double sigma = 25.0;  // 8-bit scale
  std::size_t count = 16;
  std::size_t height = 64;
  std::size_t width = 64;
  std::uint64_t seed = 1;

  bool operator==(const SynthSpec&) const = default;
};

struct ImagePair {
  Tensor<float> clean;
  Tensor<float> degraded;
};

// Smooth random colour field (a few low-frequency sinusoids per channel)
// overlaid with random rectangles and discs, clamped to [0, 1]. [H, W, 3].
Tensor<float> synth_clean(std::size_t height, std::size_t width, Rng& rng);

// N(0, sigma / 255) samples, unclamped.
Tensor<double> sample_noise(const Shape& shape, double sigma, Rng& rng);

// degraded = clamp(clean + noise). Deterministic in spec.seed.
std::vector<ImagePair> synth_dataset(const SynthSpec& spec);

}  // namespace eamamba
