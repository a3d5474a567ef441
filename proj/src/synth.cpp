#include "eamamba/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eamamba/errors.hpp"

namespace eamamba {

Tensor<float> synth_clean(std::size_t height, std::size_t width, Rng& rng) {
  if (height == 0 || width == 0) throw ConfigError("synth: image extents must be positive");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr int kWaves = 4;
  const double two_pi = 2.0 * std::numbers::pi;

  Tensor<float> img({height, width, 3});
  for (std::size_t c = 0; c < 3; ++c) {
    const double base = 0.25 + 0.5 * unit(rng);
    double fy[kWaves], fx[kWaves], phase[kWaves], amp[kWaves];
    for (int k = 0; k < kWaves; ++k) {
      fy[k] = (unit(rng) * 3.0) / double(height);
      fx[k] = (unit(rng) * 3.0) / double(width);
      phase[k] = unit(rng) * two_pi;
      amp[k] = 0.15 * unit(rng);
    }
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t q = 0; q < width; ++q) {
        double v = base;
        for (int k = 0; k < kWaves; ++k)
          v += amp[k] * std::sin(two_pi * (fy[k] * double(r) + fx[k] * double(q)) + phase[k]);
        img[(r * width + q) * 3 + c] = static_cast<float>(v);
      }
  }

  std::uniform_int_distribution<int> shape_count(3, 6);
  const int shapes = shape_count(rng);
  const double H = double(height), W = double(width);
  for (int s = 0; s < shapes; ++s) {
    const bool disc = unit(rng) < 0.5;
    const double cy = unit(rng) * H, cx = unit(rng) * W;
    const double ry = (0.08 + 0.2 * unit(rng)) * H, rx = (0.08 + 0.2 * unit(rng)) * W;
    const double radius = 0.5 * (ry + rx);
    float colour[3];
    for (float& v : colour) v = static_cast<float>(unit(rng));
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t q = 0; q < width; ++q) {
        const double dy = double(r) + 0.5 - cy, dx = double(q) + 0.5 - cx;
        const bool inside =
            disc ? dy * dy + dx * dx <= radius * radius : std::abs(dy) <= ry && std::abs(dx) <= rx;
        if (inside)
          for (std::size_t c = 0; c < 3; ++c) img[(r * width + q) * 3 + c] = colour[c];
      }
  }
  for (float& v : img.data()) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

Tensor<double> sample_noise(const Shape& shape, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ConfigError("synth: sigma must be nonnegative");
  Tensor<double> n(shape);
  if (sigma == 0.0) return n;
  std::normal_distribution<double> dist(0.0, sigma / 255.0);
  for (double& v : n.data()) v = dist(rng);
  return n;
}

std::vector<ImagePair> synth_dataset(const SynthSpec& spec) {
  if (spec.count == 0) throw ConfigError("synth: count must be positive");
  Rng rng(spec.seed);
  std::vector<ImagePair> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    ImagePair p;
    p.clean = synth_clean(spec.height, spec.width, rng);
    const Tensor<double> noise = sample_noise(p.clean.shape(), spec.sigma, rng);
    p.degraded = p.clean;
    for (std::size_t k = 0; k < p.clean.size(); ++k)
      p.degraded[k] = static_cast<float>(std::clamp(double(p.clean[k]) + noise[k], 0.0, 1.0));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace eamamba
