#include <doctest.h>

#include <cmath>
#include <numbers>

#include "eamamba/errors.hpp"
#include "eamamba/grad_check.hpp"
#include "eamamba/ops.hpp"
#include "reference/reference.hpp"

using namespace eamamba;
using Td = Tensor<double>;

namespace {

SsmParams<double> random_params(std::size_t cg, std::size_t ns, Rng& rng) {
  SsmParams<double> p = SsmParams<double>::init("s", cg, ns, rng);
  p.delta_weight.value = normal<double>({cg, cg}, 0.5, rng);
  p.delta_bias.value = normal<double>({cg}, 0.5, rng);
  p.a_log.value = normal<double>({cg, ns}, 0.5, rng);
  p.d_skip.value = normal<double>({cg}, 1.0, rng);
  return p;
}

Td run_scan(const Td& u, SsmParams<double>& p) {
  Graph<double> g;
  return selective_scan(g.constant(u), bind(g, p)).value();
}

double normwise_rel(const Td& a, const Td& b) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return scale > 0 ? diff / scale : diff;
}

}  // namespace

TEST_CASE("discretize examples") {
  SUBCASE("A = -1, delta = ln 2") {
    auto [abar, bbar] = discretize(Td({1, 1}, {std::numbers::ln2}), Td({1, 1}, {-1.0}), Td({1, 1}, {1.0}));
    CHECK(abar[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(bbar[0] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("delta -> 0") {
    auto [abar, bbar] = discretize(Td({1, 1}, {1e-12}), Td({1, 1}, {-3.0}), Td({1, 1}, {2.0}));
    CHECK(abar[0] == doctest::Approx(1.0).epsilon(1e-11));
    CHECK(std::abs(bbar[0]) < 1e-11);
  }
  SUBCASE("A -> 0 gives delta B") {
    for (double a : {-1e-6, -1e-10, -1e-300, 0.0}) {
      auto [abar, bbar] = discretize(Td({1, 1}, {0.3}), Td({1, 1}, {a}), Td({1, 1}, {2.0}));
      CHECK(bbar[0] == doctest::Approx(0.6).epsilon(1e-6));
    }
  }
  SUBCASE("simplified flag") {
    auto [abar, bbar] = discretize(Td({1, 1}, {0.5}), Td({1, 1}, {-2.0}), Td({1, 1}, {3.0}), true);
    CHECK(bbar[0] == 1.5);
    CHECK(abar[0] == doctest::Approx(std::exp(-1.0)));
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(discretize(Td({2, 1}), Td({2, 1}), Td({2, 1})), DimensionError);
  }
}

TEST_CASE("scan examples") {
  Rng rng(11);
  SUBCASE("zero input") {
    auto p = random_params(3, 4, rng);
    const Td y = run_scan(Td::zeros({6, 3}), p);
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("single step") {
    auto p = random_params(2, 3, rng);
    const Td u = normal<double>({1, 2}, 1.0, rng);
    const Td y = run_scan(u, p);
    for (std::size_t c = 0; c < 2; ++c) {
      double z = p.delta_bias.value[c];
      for (std::size_t i = 0; i < 2; ++i) z += u[i] * p.delta_weight.value.at({i, c});
      const double d = std::log1p(std::exp(z));
      double expect = p.d_skip.value[c] * u[c];
      for (std::size_t s = 0; s < 3; ++s) {
        double b = 0, cc = 0;
        for (std::size_t i = 0; i < 2; ++i) {
          b += u[i] * p.b_proj.value.at({i, s});
          cc += u[i] * p.c_proj.value.at({i, s});
        }
        const double a = -std::exp(p.a_log.value.at({c, s}));
        expect += cc * std::expm1(d * a) / a * b * u[c];
      }
      CHECK(y[c] == doctest::Approx(expect).epsilon(1e-13));
    }
  }
  SUBCASE("impulse decays by Abar") {
    // Constant delta (zero delta weights), one state, constant B and C.
    SsmParams<double> p = SsmParams<double>::init("s", 1, 1, rng);
    p.delta_weight.value = Td::zeros({1, 1});
    p.delta_bias.value = Td({1}, {0.4});
    p.a_log.value = Td({1, 1}, {0.0});
    p.b_proj.value = Td({1, 1}, {1.0});
    p.c_proj.value = Td({1, 1}, {1.0});
    p.d_skip.value = Td({1}, {0.0});
    // B_t and C_t scale with u_t, so the decay shows in the state.
    Td u = Td::zeros({6, 1});
    u[0] = 1.0;
    kernels::ScanTape<double> tape;
    std::vector<double> y(6);
    kernels::scan_forward(u.data().data(), 6, kernels::weights_of(p), y.data(), &tape);
    const double abar = std::exp(-std::log1p(std::exp(0.4)));
    CHECK(tape.h[0] > 0.0);
    for (std::size_t t = 1; t < 6; ++t) {
      CHECK(tape.h[t] == doctest::Approx(tape.h[t - 1] * abar).epsilon(1e-14));
      CHECK(y[t] == 0.0);
    }
  }
  SUBCASE("C = 0 leaves the skip path") {
    auto p = random_params(3, 2, rng);
    p.c_proj.value = Td::zeros({3, 2});
    const Td u = normal<double>({5, 3}, 1.0, rng);
    const Td y = run_scan(u, p);
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t c = 0; c < 3; ++c) CHECK(y[t * 3 + c] == p.d_skip.value[c] * u[t * 3 + c]);
  }
}

TEST_CASE("scan agrees with the naive oracle") {
  Rng rng(12);
  double worst = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t L = 1 + rng() % 8, cg = 1 + rng() % 4, ns = 1 + rng() % 4;
    auto p = random_params(cg, ns, rng);
    const Td u = normal<double>({L, cg}, 1.0, rng);
    worst = std::max(worst, normwise_rel(run_scan(u, p), reference::selective_scan_ref(u, p)));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("scan is causal") {
  Rng rng(13);
  auto p = random_params(3, 4, rng);
  const Td u = normal<double>({10, 3}, 1.0, rng);
  const Td y = run_scan(u, p);
  for (std::size_t t = 0; t < 9; ++t) {
    Td v = u;
    for (std::size_t k = t + 1; k < 10; ++k)
      for (std::size_t c = 0; c < 3; ++c) v[k * 3 + c] += 5.0;
    const Td yv = run_scan(v, p);
    for (std::size_t i = 0; i < (t + 1) * 3; ++i) CHECK(yv[i] == y[i]);
  }
}

TEST_CASE("state stays bounded") {
  Rng rng(14);
  auto p = random_params(2, 3, rng);
  const std::size_t L = 200;
  const Td u = uniform<double>({L, 2}, -1.0, 1.0, rng);
  kernels::ScanTape<double> tape;
  std::vector<double> y(L * 2);
  kernels::scan_forward(u.data().data(), L, kernels::weights_of(p), y.data(), &tape);
  double max_abar = 0, max_inject = 0, max_h = 0;
  for (std::size_t i = 0; i < tape.abar.size(); ++i) {
    CHECK(tape.abar[i] > 0.0);
    CHECK(tape.abar[i] < 1.0);
    max_abar = std::max(max_abar, tape.abar[i]);
    max_h = std::max(max_h, std::abs(tape.h[i]));
  }
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t s = 0; s < 3; ++s)
        max_inject = std::max(max_inject, std::abs(tape.gain[(t * 2 + c) * 3 + s] * tape.b[t * 3 + s] *
                                                   tape.u[t * 2 + c]));
  CHECK(max_h <= max_inject / (1.0 - max_abar) * (1 + 1e-12));
}

TEST_CASE("scan reports the failing step") {
  Rng rng(15);
  auto p = random_params(1, 1, rng);
  Td u({3, 1}, {0.1, 1e300, 0.2});
  p.d_skip.value = Td({1}, {1e10});
  try {
    run_scan(u, p);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("scan gradients") {
  Rng rng(16);
  for (bool simplified : {false, true}) {
    auto p = random_params(3, 2, rng);
    p.simplified_bbar = simplified;
    const Td u = normal<double>({5, 3}, 1.0, rng);
    const Td w = normal<double>({5, 3}, 1.0, rng);
    auto loss = [&](Graph<double>& g, Var<double> uv) {
      return sum(mul(selective_scan(uv, bind(g, p)), g.constant(w)));
    };
    const double du = grad_check([&](Var<double> uv) { return loss(uv.graph(), uv); }, u);
    CHECK(du < 1e-4);
    std::vector<Parameter<double>*> params;
    p.visit([&](Parameter<double>& q) { params.push_back(&q); });
    const GradCheckResult r =
        grad_check_params([&](Graph<double>& g) { return loss(g, g.constant(u)); }, params);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("float and double scans agree") {
  Rng rng(17);
  auto p = random_params(4, 4, rng);
  const Td u = normal<double>({12, 4}, 1.0, rng);
  SsmParams<float> pf;
  pf.d_inner = 4;
  pf.d_state = 4;
  pf.delta_weight.value = p.delta_weight.value.cast<float>();
  pf.delta_bias.value = p.delta_bias.value.cast<float>();
  pf.a_log.value = p.a_log.value.cast<float>();
  pf.b_proj.value = p.b_proj.value.cast<float>();
  pf.c_proj.value = p.c_proj.value.cast<float>();
  pf.d_skip.value = p.d_skip.value.cast<float>();
  std::vector<float> yf(48);
  const Tensor<float> uf = u.cast<float>();
  kernels::scan_forward(uf.data().data(), 12, kernels::weights_of(pf), yf.data(),
                        static_cast<kernels::ScanTape<float>*>(nullptr));
  const Td yd = run_scan(u, p);
  for (std::size_t i = 0; i < 48; ++i) CHECK(yf[i] == doctest::Approx(yd[i]).epsilon(1e-4));
}
