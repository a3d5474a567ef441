#include <doctest.h>

#include "eamamba/analysis.hpp"
#include "eamamba/errors.hpp"
#include "eamamba/grad_check.hpp"
#include "eamamba/ops.hpp"
#include "reference/reference.hpp"

using namespace eamamba;
using Td = Tensor<double>;

namespace {

MhssParams<double> make_mhss(std::size_t channels, std::size_t groups, const std::string& set,
                             std::uint64_t seed) {
  Rng rng(seed);
  auto p = MhssParams<double>::init("m", channels, groups, scan_set(set), 3, rng);
  for (auto& gp : p.group_params) {
    gp.delta_weight.value = normal<double>(gp.delta_weight.value.shape(), 0.5, rng);
    gp.d_skip.value = normal<double>(gp.d_skip.value.shape(), 1.0, rng);
  }
  return p;
}

Td run_mhss(const Td& x, MhssParams<double>& p) {
  CurveCache cache;
  Graph<double> g;
  return mhss(g.constant(x), p, cache).value();
}

}  // namespace

TEST_CASE("mhss matches the composite oracle") {
  Rng rng(21);
  for (const char* set : {"all_around", "hilbert", "zigzag,zorder_rev,vertical"}) {
    auto p = make_mhss(12, 6, set, 3);
    const Td x = normal<double>({5, 6, 12}, 1.0, rng);
    CurveCache cache;
    Graph<double> g;
    const Td ref = reference::mhss_composite(g.constant(x), p, cache).value();
    CHECK(run_mhss(x, p) == ref);
  }
}

TEST_CASE("one group on one raster curve is a plain scan") {
  Rng rng(22);
  auto p = make_mhss(3, 1, "horizontal", 4);
  const Td x = normal<double>({4, 5, 3}, 1.0, rng);
  const Td ref = reference::selective_scan_ref(x.reshaped({20, 3}), p.group_params[0]);
  const Td y = run_mhss(x, p);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("swapping groups swaps outputs") {
  Rng rng(23);
  auto p = make_mhss(4, 2, "horizontal", 5);  // both groups on the same curve
  const Td x = normal<double>({3, 4, 4}, 1.0, rng);
  auto q = p;
  std::swap(q.group_params[0], q.group_params[1]);
  Td xs = x;
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t c = 0; c < 2; ++c) std::swap(xs[i * 4 + c], xs[i * 4 + 2 + c]);
  const Td y = run_mhss(x, p), ys = run_mhss(xs, q);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(ys[i * 4 + c] == y[i * 4 + 2 + c]);
      CHECK(ys[i * 4 + 2 + c] == y[i * 4 + c]);
    }
}

TEST_CASE("skip-only groups pass the input through") {
  Rng rng(24);
  auto p = make_mhss(8, 4, "all_around", 6);
  for (auto& gp : p.group_params) {
    gp.c_proj.value.fill(0.0);
    gp.d_skip.value.fill(1.0);
  }
  const Td x = normal<double>({4, 4, 8}, 1.0, rng);
  CHECK(run_mhss(x, p) == x);
}

TEST_CASE("groups are independent") {
  Rng rng(25);
  auto p = make_mhss(8, 4, "all_around", 7);
  const Td x = normal<double>({4, 5, 8}, 1.0, rng);
  const Td y = run_mhss(x, p);
  for (std::size_t grp = 0; grp < 4; ++grp) {
    Td xz = x;
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t c = 0; c < 2; ++c) xz[i * 8 + grp * 2 + c] = 0.0;
    const Td yz = run_mhss(xz, p);
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t c = 0; c < 8; ++c)
        if (c / 2 != grp) CHECK(yz[i * 8 + c] == y[i * 8 + c]);
        else CHECK(yz[i * 8 + c] == 0.0);
  }
}

TEST_CASE("group i scans along curve i mod k") {
  auto p = make_mhss(8, 8, "all_around", 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(p.curve_of(i) == scan_set("all_around")[i]);
  auto q = make_mhss(8, 4, "vertical,zorder,hilbert", 8);
  CHECK(q.curve_of(3) == CurveSpec{CurveKind::vertical, false});
}

TEST_CASE("mhss validation") {
  CHECK_THROWS_AS(validate_mhss(10, 4, 2), ConfigError);
  CHECK_THROWS_AS(validate_mhss(8, 0, 2), ConfigError);
  CHECK_THROWS_AS(validate_mhss(8, 4, 0), ConfigError);
  CHECK_NOTHROW(validate_mhss(8, 4, 8));
  auto p = make_mhss(4, 2, "2d", 9);
  Graph<double> g;
  CurveCache cache;
  auto bound = std::vector<SsmVars<double>>{bind(g, p.group_params[0]), bind(g, p.group_params[1])};
  const ScanCurve wrong = build_curve(CurveKind::horizontal, false, 3, 3);
  const ScanCurve* curves[] = {&wrong, &wrong};
  CHECK_THROWS_AS(mhss(g.constant(Td::zeros({4, 4, 4})), std::span<const ScanCurve* const>(curves),
                       std::span<const SsmVars<double>>(bound)),
                  DimensionError);
}

TEST_CASE("mhss parameters do not depend on the number of curves") {
  Rng rng(26);
  const std::size_t base = MhssParams<double>::init("m", 16, 8, scan_set("horizontal"), 4, rng).param_count();
  for (const char* set : {"2d", "all_around", "hilbert"})
    CHECK(MhssParams<double>::init("m", 16, 8, scan_set(set), 4, rng).param_count() == base);
}

TEST_CASE("mhssm gating") {
  Rng rng(27);
  auto p = MhssmParams<double>::init("b", 4, 2.0, 2, scan_set("all_around"), 4, rng);
  CHECK(p.inner == 8);
  const Td x = normal<double>({5, 4, 4}, 1.0, rng);
  CurveCache cache;
  SUBCASE("shape") {
    Graph<double> g;
    CHECK(mhssm_forward(g.constant(x), p, cache).shape() == x.shape());
  }
  SUBCASE("zero output projection") {
    p.out_proj.value.fill(0.0);
    Graph<double> g;
    for (double v : mhssm_forward(g.constant(x), p, cache).value().data()) CHECK(v == 0.0);
  }
  SUBCASE("closed gate") {
    p.in_proj_right.value.fill(0.0);
    Graph<double> g;
    for (double v : mhssm_forward(g.constant(x), p, cache).value().data()) CHECK(v == 0.0);
  }
}

TEST_CASE("mhssm gradients") {
  Rng rng(28);
  auto p = MhssmParams<double>::init("b", 4, 2.0, 2, scan_set("all_around"), 4, rng);
  const Td x = normal<double>({8, 8, 4}, 1.0, rng);
  const Td w = normal<double>({8, 8, 4}, 1.0, rng);
  CurveCache cache;
  auto loss = [&](Graph<double>& g, Var<double> xv) {
    return sum(mul(mhssm_forward(xv, p, cache), g.constant(w)));
  };
  CHECK(grad_check([&](Var<double> xv) { return loss(xv.graph(), xv); }, x) < 1e-4);
  std::vector<Parameter<double>*> params;
  p.visit([&](Parameter<double>& q) { params.push_back(&q); });
  const auto r = grad_check_params([&](Graph<double>& g) { return loss(g, g.constant(x)); }, params,
                                   1e-4, 6);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("twodss baseline") {
  Rng rng(29);
  const Td x = normal<double>({4, 4, 6}, 1.0, rng);
  SUBCASE("one curve equals single-group mhss") {
    Rng r1(5), r2(5);
    auto t = TwoDssParams<double>::init("t", 6, scan_set("vertical"), 3, r1);
    auto m = MhssParams<double>::init("t", 6, 1, scan_set("vertical"), 3, r2);
    m.group_params[0] = t.curve_params[0];
    CurveCache cache;
    Graph<double> g;
    CHECK(twodss_forward(g.constant(x), t, cache).value() == run_mhss(x, m));
  }
  SUBCASE("sum over curves") {
    Rng r1(6);
    auto t = TwoDssParams<double>::init("t", 6, scan_set("2d"), 3, r1);
    CurveCache cache;
    Graph<double> g;
    const Td y = twodss_forward(g.constant(x), t, cache).value();
    Td expect = Td::zeros(x.shape());
    for (std::size_t k = 0; k < 4; ++k) {
      auto m = MhssParams<double>::init("t", 6, 1, {t.curves[k]}, 3, r1);
      m.group_params[0] = t.curve_params[k];
      const Td yk = run_mhss(x, m);
      for (std::size_t i = 0; i < yk.size(); ++i) expect[i] += yk[i];
    }
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-14));
  }
  SUBCASE("parameters scale with curves") {
    Rng r1(7);
    const auto one = TwoDssParams<double>::init("t", 6, scan_set("horizontal"), 3, r1).param_count();
    CHECK(TwoDssParams<double>::init("t", 6, scan_set("2d"), 3, r1).param_count() == 4 * one);
  }
}
