#pragma once

#include "eamamba/tensor.hpp"

namespace eamamba {

// Reported instead of +infinity for identical images.
inline constexpr double kPsnrCap = 99.0;

// 10 log10(1 / mse) for images in [0, 1], capped at kPsnrCap.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b);

// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
// k1 = 0.01, k2 = 0.03, averaged over channels. Images must be [H, W, C]
// with H, W >= 11.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace eamamba
