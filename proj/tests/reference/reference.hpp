#pragma once

// Naive serial oracles. Each follows the textbook formula step by step and
// shares no code with the kernels under test.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "eamamba/mhssm.hpp"
#include "eamamba/ops.hpp"
#include "eamamba/scan_curve.hpp"
#include "eamamba/selective_scan.hpp"
#include "eamamba/tensor.hpp"

namespace eamamba::reference {

// y[L, Cg] for u[L, Cg] under params p.
inline Tensor<double> selective_scan_ref(const Tensor<double>& u, const SsmParams<double>& p) {
  const std::size_t L = u.extent(0), Cg = p.d_inner, Ns = p.d_state;
  const auto& Wd = p.delta_weight.value;
  const auto& bd = p.delta_bias.value;
  const auto& Wb = p.b_proj.value;
  const auto& Wc = p.c_proj.value;
  const auto& D = p.d_skip.value;
  std::vector<double> A(Cg * Ns);
  for (std::size_t i = 0; i < Cg * Ns; ++i) A[i] = -std::exp(p.a_log.value[i]);

  std::vector<double> h(Cg * Ns, 0.0);
  Tensor<double> y({L, Cg});
  for (std::size_t t = 0; t < L; ++t) {
    std::vector<double> delta(Cg), B(Ns, 0.0), C(Ns, 0.0);
    for (std::size_t c = 0; c < Cg; ++c) {
      double z = bd[c];
      for (std::size_t i = 0; i < Cg; ++i) z += u.at({t, i}) * Wd.at({i, c});
      delta[c] = std::log(1.0 + std::exp(z));
    }
    for (std::size_t s = 0; s < Ns; ++s)
      for (std::size_t i = 0; i < Cg; ++i) {
        B[s] += u.at({t, i}) * Wb.at({i, s});
        C[s] += u.at({t, i}) * Wc.at({i, s});
      }
    for (std::size_t c = 0; c < Cg; ++c) {
      double out = D[c] * u.at({t, c});
      for (std::size_t s = 0; s < Ns; ++s) {
        const double a = A[c * Ns + s];
        const double abar = std::exp(delta[c] * a);
        const double bbar = p.simplified_bbar ? delta[c] * B[s] : (abar - 1.0) / a * B[s];
        double& hs = h[c * Ns + s];
        hs = abar * hs + bbar * u.at({t, c});
        out += C[s] * hs;
      }
      y.at({t, c}) = out;
    }
  }
  return y;
}

// MHSS assembled from slicing, curve gather, the graph scan op, scatter and
// concatenation, one group at a time.
template <typename T>
Var<T> mhss_composite(Var<T> x, MhssParams<T>& p, CurveCache& cache) {
  const std::size_t H = x.shape()[0], W = x.shape()[1], Cg = p.group_width();
  std::vector<Var<T>> parts;
  for (std::size_t g = 0; g < p.groups; ++g) {
    const auto curve = cache.get(p.curve_of(g), H, W);
    Var<T> xs = slice_channels(x, g * Cg, Cg);
    Var<T> seq = apply_curve(xs, *curve);
    Var<T> ys = selective_scan(seq, bind(x.graph(), p.group_params[g]));
    parts.push_back(invert_curve(ys, *curve));
  }
  return concat_channels(std::span<const Var<T>>(parts));
}

// Zero-padded depth-wise convolution, direct sum.
inline Tensor<double> dwconv_ref(const Tensor<double>& x, const Tensor<double>& k) {
  const std::size_t H = x.extent(0), W = x.extent(1), C = x.extent(2), K = k.extent(0);
  const long r = long(K / 2);
  Tensor<double> y({H, W, C});
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (long di = -r; di <= r; ++di)
          for (long dj = -r; dj <= r; ++dj) {
            const long ii = long(i) + di, jj = long(j) + dj;
            if (ii < 0 || jj < 0 || ii >= long(H) || jj >= long(W)) continue;
            acc += x.at({std::size_t(ii), std::size_t(jj), c}) *
                   k.at({std::size_t(di + r), std::size_t(dj + r), c});
          }
        y.at({i, j, c}) = acc;
      }
  return y;
}

}  // namespace eamamba::reference
