#include "eamamba/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "eamamba/errors.hpp"

namespace eamamba {

namespace {

std::vector<std::size_t> sample_coords(std::size_t n, std::size_t max_coords) {
  std::vector<std::size_t> idx;
  if (max_coords == 0 || max_coords >= n) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  for (std::size_t k = 0; k < max_coords; ++k) idx.push_back(k * n / max_coords);
  return idx;
}

double scalar_of(const Var<double>& v) {
  if (v.value().size() != 1) throw ContractError("grad_check: function must return a scalar");
  return v.value()[0];
}

void update(GradCheckResult& r, double analytic, double numeric, std::size_t input,
            std::size_t index) {
  const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
  ++r.coords_checked;
  if (err > r.max_rel_error || !std::isfinite(err)) {
    r.max_rel_error = std::isfinite(err) ? err : INFINITY;
    r.worst_input = input;
    r.worst_index = index;
  }
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                           double step, std::size_t max_coords) {
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    std::vector<Var<double>> leaves;
    for (const auto& t : inputs) leaves.push_back(g.leaf(t, true));
    Var<double> out = f(g, leaves);
    scalar_of(out);
    g.backward(out);
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      const Tensor<double>* gr = g.grad(leaves[k]);
      analytic.push_back(gr ? *gr : Tensor<double>::zeros(inputs[k].shape()));
    }
  }

  auto evaluate = [&](const std::vector<Tensor<double>>& xs) {
    Graph<double> g(false);
    std::vector<Var<double>> leaves;
    for (const auto& t : xs) leaves.push_back(g.leaf(t, false));
    return scalar_of(f(g, leaves));
  };

  GradCheckResult result;
  std::vector<Tensor<double>> work = inputs;
  for (std::size_t k = 0; k < work.size(); ++k) {
    for (std::size_t i : sample_coords(work[k].size(), max_coords)) {
      const double orig = work[k][i];
      work[k][i] = orig + step;
      const double up = evaluate(work);
      work[k][i] = orig - step;
      const double down = evaluate(work);
      work[k][i] = orig;
      update(result, analytic[k][i], (up - down) / (2 * step), k, i);
    }
  }
  return result;
}

double grad_check(const std::function<Var<double>(Var<double>)>& f, const Tensor<double>& x,
                  double step) {
  ScalarFn wrapped = [&](Graph<double>&, std::span<const Var<double>> in) { return f(in[0]); };
  return grad_check(wrapped, {x}, step).max_rel_error;
}

GradCheckResult grad_check_params(const std::function<Var<double>(Graph<double>&)>& loss,
                                  std::span<Parameter<double>* const> params, double step,
                                  std::size_t max_coords) {
  for (Parameter<double>* p : params) p->zero_grad();
  {
    Graph<double> g;
    Var<double> out = loss(g);
    scalar_of(out);
    g.backward(out);
  }
  std::vector<Tensor<double>> analytic;
  for (Parameter<double>* p : params) analytic.push_back(p->grad);

  auto evaluate = [&] {
    Graph<double> g(false);
    return scalar_of(loss(g));
  };

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<double>& v = params[k]->value;
    for (std::size_t i : sample_coords(v.size(), max_coords)) {
      const double orig = v[i];
      v[i] = orig + step;
      const double up = evaluate();
      v[i] = orig - step;
      const double down = evaluate();
      v[i] = orig;
      update(result, analytic[k][i], (up - down) / (2 * step), k, i);
    }
  }
  for (Parameter<double>* p : params) p->zero_grad();
  return result;
}

}  // namespace eamamba
