#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "eamamba/grad_check.hpp"
#include "eamamba/restoration_net.hpp"

namespace eamamba {

// Counting convention: one multiply-accumulate is one FLOP. Only linear
// maps, convolutions and the selective scan are charged; normalization,
// activations, gating products and resampling shuffles are free. A scan of
// length L over Cg channels with Ns states costs selective_scan_macs().
struct CostEntry {
  std::string module;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct CostReport {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::vector<CostEntry> breakdown;

  void add(std::string module, std::uint64_t params, std::uint64_t flops);
  // module,params,flops rows followed by a "total" row.
  void write_csv(std::ostream& os) const;
};

// Analytic cost of the network at the given input extents (padded the same
// way forward() pads).
CostReport count_cost(const NetConfig& cfg, std::size_t height, std::size_t width);
std::uint64_t count_flops(const NetConfig& cfg, std::size_t height, std::size_t width);

template <typename T>
std::uint64_t count_params(RestorationNet<T>& net) {
  return net.param_count();
}

// MACs recorded by the graph while running forward on a zero image.
template <typename T>
std::uint64_t measured_flops(RestorationNet<T>& net, std::size_t height, std::size_t width);

// Cost of one scan module over `channels` channels on an H x W map.
struct ScanCost {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  bool operator==(const ScanCost&) const = default;
};
ScanCost mhss_cost(std::size_t channels, std::size_t groups, std::size_t curves,
                   std::size_t d_state, std::size_t height, std::size_t width);
ScanCost twodss_cost(std::size_t channels, std::size_t curves, std::size_t d_state,
                     std::size_t height, std::size_t width);

// Normalized map of |d out(row, col) / d input| summed over input channels
// and averaged over images.
struct ErfMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  std::vector<double> values;  // row-major, sums to 1

  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  // Share of the mass outside the target pixel lying within
  // +-half_angle degrees of the two diagonals through the target.
  double diagonal_cone_mass(double half_angle_deg = 10.0) const;
  // row,col,value
  void write_csv(std::ostream& os) const;
  // 8-bit heat map scaled by the maximum value.
  void write_pgm(const std::string& path) const;
};

using ImageFn = std::function<Var<double>(Var<double>)>;

ErfMap erf_map(const ImageFn& f, const std::vector<Tensor<double>>& images, std::size_t row,
               std::size_t col);

template <typename T>
ErfMap erf_map(RestorationNet<T>& net, const std::vector<Tensor<double>>& images, std::size_t row,
               std::size_t col);

// Finite-difference check of every parameter tensor of a 64-bit network
// built from (cfg, seed), on a random size x size image with the loss
// sum(forward(x) * R) for a fixed random R. At most `max_coords`
// coordinates are probed per tensor.
GradCheckResult network_grad_check(const NetConfig& cfg, std::uint64_t seed, std::size_t size,
                                   std::size_t max_coords = 4);

struct LocalityRow {
  CurveSpec curve;
  LocalityProfile profile;
};

std::vector<LocalityRow> locality_report(const std::string& scan_set, std::size_t height,
                                         std::size_t width);
void write_locality_csv(std::ostream& os, const std::vector<LocalityRow>& rows);

}  // namespace eamamba
