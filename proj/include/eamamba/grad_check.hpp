#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "eamamba/graph.hpp"

namespace eamamba {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;  // which input / parameter
  std::size_t worst_index = 0;  // flat coordinate within it
  std::size_t coords_checked = 0;
};

// Builds a scalar on `g` from the leaves bound to the inputs.
using ScalarFn = std::function<Var<double>(Graph<double>& g, std::span<const Var<double>> inputs)>;

// Compares reverse-mode gradients with central differences, in 64-bit.
// Error per coordinate is |analytic - numeric| / max(1, |numeric|).
// `max_coords` > 0 limits each input to that many evenly spaced coordinates.
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                           double step = 1e-4, std::size_t max_coords = 0);

double grad_check(const std::function<Var<double>(Var<double>)>& f, const Tensor<double>& x,
                  double step = 1e-4);

// Same check against parameters owned by a module. `loss` must build the
// scalar from scratch on the graph it receives.
GradCheckResult grad_check_params(const std::function<Var<double>(Graph<double>&)>& loss,
                                  std::span<Parameter<double>* const> params, double step = 1e-4,
                                  std::size_t max_coords = 0);

}  // namespace eamamba
