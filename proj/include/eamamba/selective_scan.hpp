#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eamamba/graph.hpp"
#include "eamamba/random.hpp"

namespace eamamba {

// Per-group parameters of the input-dependent state-space recurrence
//
//   delta_t = softplus(u_t Wd + bd)              [Cg]
//   B_t     = u_t Wb,   C_t = u_t Wc             [Ns]
//   Abar    = exp(delta A),  Bbar = (Abar - 1) / A * B_t
//   h_t     = Abar * h_{t-1} + Bbar * u_t        [Cg, Ns]
//   y_t     = <C_t, h_t> + D * u_t
//
// with A = -exp(a_log) < 0 so that 0 < Abar < 1 whenever delta > 0.
template <typename T>
struct SsmParams {
  std::size_t d_inner = 0;
  std::size_t d_state = 0;
  Parameter<T> delta_weight;  // [Cg, Cg]
  Parameter<T> delta_bias;    // [Cg]
  Parameter<T> a_log;         // [Cg, Ns]
  Parameter<T> b_proj;        // [Cg, Ns]
  Parameter<T> c_proj;        // [Cg, Ns]
  Parameter<T> d_skip;        // [Cg]
  // Bbar = delta * B instead of the exact zero-order hold.
  bool simplified_bbar = false;

  // Reference initialization: softplus(delta_bias) log-uniform in
  // [1e-3, 0.1], A = -(1..Ns) per channel, D = 1.
  static SsmParams init(const std::string& prefix, std::size_t d_inner, std::size_t d_state,
                        Rng& rng);

  template <typename F>
  void visit(F&& f) {
    f(delta_weight);
    f(delta_bias);
    f(a_log);
    f(b_proj);
    f(c_proj);
    f(d_skip);
  }

  std::size_t param_count() const;
};

template <typename T>
struct SsmVars {
  Var<T> delta_weight, delta_bias, a_log, b_proj, c_proj, d_skip;
  bool simplified_bbar = false;
};

template <typename T>
SsmVars<T> bind(Graph<T>& g, SsmParams<T>& p);

// Zero-order-hold discretization. delta [L, Cg], a [Cg, Ns] (negative),
// b [L, Ns] -> (Abar, Bbar), both [L, Cg, Ns].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> discretize(const Tensor<T>& delta, const Tensor<T>& a,
                                           const Tensor<T>& b, bool simplified_bbar = false);

// Differentiable scan over u [L, Cg]. h_0 = 0.
template <typename T>
Var<T> selective_scan(Var<T> u, const SsmVars<T>& p);

// Multiply-accumulates charged per (step, channel, state) by the recurrence:
// delta*A, Bbar*u, Abar*h, C*h.
inline constexpr std::uint64_t kScanMacsPerState = 4;

// Total MACs of one scan: delta projection, B/C projections, recurrence, skip.
constexpr std::uint64_t selective_scan_macs(std::uint64_t L, std::uint64_t d_inner,
                                            std::uint64_t d_state) {
  return L * (d_inner * d_inner + 2 * d_inner * d_state + kScanMacsPerState * d_inner * d_state +
              d_inner);
}

namespace kernels {

template <typename T>
struct SsmWeights {
  const T* delta_weight = nullptr;
  const T* delta_bias = nullptr;
  const T* a_log = nullptr;
  const T* b_proj = nullptr;
  const T* c_proj = nullptr;
  const T* d_skip = nullptr;
  std::size_t d_inner = 0;
  std::size_t d_state = 0;
  bool simplified_bbar = false;
};

// Gradient accumulators; null entries are skipped.
template <typename T>
struct SsmGrads {
  T* delta_weight = nullptr;
  T* delta_bias = nullptr;
  T* a_log = nullptr;
  T* b_proj = nullptr;
  T* c_proj = nullptr;
  T* d_skip = nullptr;
};

// Forward intermediates kept for the backward pass.
template <typename T>
struct ScanTape {
  std::size_t length = 0;
  std::vector<T> u;      // [L, Cg]
  std::vector<T> z;      // [L, Cg] pre-softplus
  std::vector<T> delta;  // [L, Cg]
  std::vector<T> b;      // [L, Ns]
  std::vector<T> c;      // [L, Ns]
  std::vector<T> abar;   // [L, Cg, Ns]
  std::vector<T> gain;   // [L, Cg, Ns], Bbar / B
  std::vector<T> h;      // [L, Cg, Ns]
};

template <typename T>
SsmWeights<T> weights_of(const SsmParams<T>& p);

// u and y are [L, Cg] row-major. When `tape` is non-null it receives the
// forward intermediates (u included). Throws NumericError naming the step
// at which the output stopped being finite.
template <typename T>
void scan_forward(const T* u, std::size_t length, const SsmWeights<T>& w, T* y,
                  ScanTape<T>* tape);

// Accumulates du [L, Cg] (if non-null) and parameter gradients for upstream dy.
template <typename T>
void scan_backward(const ScanTape<T>& tape, const SsmWeights<T>& w, const T* dy, T* du,
                   const SsmGrads<T>& grads);

}  // namespace kernels

}  // namespace eamamba
