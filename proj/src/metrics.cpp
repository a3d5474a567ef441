#include "eamamba/metrics.hpp"

#include <array>
#include <cmath>

#include "eamamba/errors.hpp"

namespace eamamba {

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  if (a.empty()) throw DimensionError("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    se += d * d;
  }
  const double mse = se / double(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - kWindow / 2;
    w[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  if (a.rank() != 3) throw DimensionError("ssim: expected [H, W, C] images");
  const std::size_t H = a.extent(0), W = a.extent(1), C = a.extent(2);
  if (H < kWindow || W < kWindow)
    throw DimensionError("ssim: images must be at least 11x11, got " + shape_str(a.shape()));
  const auto g = gaussian_window();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::size_t oh = H - kWindow + 1, ow = W - kWindow + 1;
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    double channel_sum = 0.0;
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t q = 0; q < ow; ++q) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < kWindow; ++i)
          for (int j = 0; j < kWindow; ++j) {
            const double w = g[i] * g[j];
            const std::size_t idx = ((r + i) * W + (q + j)) * C + c;
            const double x = a[idx], y = b[idx];
            mx += w * x;
            my += w * y;
            sxx += w * x * x;
            syy += w * y * y;
            sxy += w * x * y;
          }
        const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
        channel_sum += ((2 * mx * my + c1) * (2 * cov + c2)) /
                       ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    total += channel_sum / double(oh * ow);
  }
  return total / double(C);
}

template double psnr(const Tensor<float>&, const Tensor<float>&);
template double psnr(const Tensor<double>&, const Tensor<double>&);
template double ssim(const Tensor<float>&, const Tensor<float>&);
template double ssim(const Tensor<double>&, const Tensor<double>&);

}  // namespace eamamba
