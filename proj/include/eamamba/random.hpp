#pragma once

#include <cstdint>
#include <random>

#include "eamamba/tensor.hpp"

namespace eamamba {

using Rng = std::mt19937_64;

// Normal(0, std) resampled until within two standard deviations.
template <typename T>
Tensor<T> trunc_normal(Shape shape, double std, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (T& v : t.data()) {
    double z = dist(rng);
    while (z < -2.0 || z > 2.0) z = dist(rng);
    v = static_cast<T>(z * std);
  }
  return t;
}

template <typename T>
Tensor<T> uniform(Shape shape, double lo, double hi, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (T& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T> normal(Shape shape, double std, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std);
  for (T& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace eamamba
