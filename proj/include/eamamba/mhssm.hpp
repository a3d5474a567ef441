#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eamamba/scan_curve.hpp"
#include "eamamba/selective_scan.hpp"

namespace eamamba {

// Channel-grouped selective scan. Group i owns channels
// [i * Cg, (i + 1) * Cg) and is scanned along curves[i % k].
template <typename T>
struct MhssParams {
  std::size_t channels = 0;
  std::size_t groups = 0;
  std::vector<CurveSpec> curves;
  std::vector<SsmParams<T>> group_params;

  static MhssParams init(const std::string& prefix, std::size_t channels, std::size_t groups,
                         std::vector<CurveSpec> curves, std::size_t d_state, Rng& rng);

  std::size_t group_width() const { return channels / groups; }
  CurveSpec curve_of(std::size_t group) const { return curves[group % curves.size()]; }

  template <typename F>
  void visit(F&& f) {
    for (auto& g : group_params) g.visit(f);
  }
  std::size_t param_count() const;
};

// Throws ConfigError unless channels % groups == 0, groups > 0 and at least
// one curve is given.
void validate_mhss(std::size_t channels, std::size_t groups, std::size_t curves);

// x[H, W, channels] -> same shape. `curves[i]` is the curve bound to group i
// and must match x's extents. Groups run in parallel.
template <typename T>
Var<T> mhss(Var<T> x, std::span<const ScanCurve* const> curves,
            std::span<const SsmVars<T>> group_params);

// Convenience overload: binds the parameters on x's graph and resolves the
// curves through `cache`.
template <typename T>
Var<T> mhss(Var<T> x, MhssParams<T>& p, CurveCache& cache);

// Gated token mixer:
//   Y   = LN(MHSS(SiLU(DWConv(x W_left))))
//   Z   = SiLU(x W_right)
//   out = (Y * Z) W_out
template <typename T>
struct MhssmParams {
  std::size_t channels = 0;
  std::size_t inner = 0;  // round(expansion * channels)
  Parameter<T> in_proj_left;   // [C, inner]
  Parameter<T> in_proj_right;  // [C, inner]
  Parameter<T> dwconv_weight;  // [3, 3, inner]
  Parameter<T> dwconv_bias;    // [inner]
  MhssParams<T> mhss;
  Parameter<T> norm_gamma;     // [inner]
  Parameter<T> norm_beta;      // [inner]
  Parameter<T> out_proj;       // [inner, C]

  static MhssmParams init(const std::string& prefix, std::size_t channels, double expansion,
                          std::size_t groups, std::vector<CurveSpec> curves, std::size_t d_state,
                          Rng& rng);

  template <typename F>
  void visit(F&& f) {
    f(in_proj_left);
    f(in_proj_right);
    f(dwconv_weight);
    f(dwconv_bias);
    mhss.visit(f);
    f(norm_gamma);
    f(norm_beta);
    f(out_proj);
  }
  std::size_t param_count() const;
};

std::size_t expanded_channels(std::size_t channels, double expansion);

template <typename T>
Var<T> mhssm_forward(Var<T> x, MhssmParams<T>& p, CurveCache& cache);

// Baseline in which every curve scans all channels with its own parameters;
// per-curve outputs are summed.
template <typename T>
struct TwoDssParams {
  std::size_t channels = 0;
  std::vector<CurveSpec> curves;
  std::vector<SsmParams<T>> curve_params;

  static TwoDssParams init(const std::string& prefix, std::size_t channels,
                           std::vector<CurveSpec> curves, std::size_t d_state, Rng& rng);

  template <typename F>
  void visit(F&& f) {
    for (auto& c : curve_params) c.visit(f);
  }
  std::size_t param_count() const;
};

template <typename T>
Var<T> twodss_forward(Var<T> x, TwoDssParams<T>& p, CurveCache& cache);

}  // namespace eamamba
