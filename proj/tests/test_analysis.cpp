#include <doctest.h>

#include <cmath>
#include <sstream>

#include "eamamba/analysis.hpp"
#include "eamamba/errors.hpp"
#include "eamamba/ops.hpp"

using namespace eamamba;
using Td = Tensor<double>;

namespace {

NetConfig small_config() {
  NetConfig c = NetConfig::tiny();
  c.base_channels = 8;
  c.groups = 4;
  c.d_state = 4;
  return c;
}

std::vector<Td> random_images(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Td> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(uniform<double>({h, w, 3}, 0.0, 1.0, rng));
  return out;
}

void check_normalized(const ErfMap& m) {
  double total = 0;
  for (double v : m.values) {
    CHECK(v >= 0.0);
    total += v;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}

}  // namespace

TEST_CASE("linear cost") {
  Graph<double> g;
  auto y = linear<double>(g.constant(Td::zeros({2, 2, 4})), g.constant(Td::zeros({4, 8})),
                  std::optional(g.constant(Td::zeros({8}))));
  CHECK(g.macs() == 2 * 2 * 4 * 8);
  Rng rng(1);
  auto p = ChannelMlpParams<double>::init("m", MlpKind::ffn, 4, 2.0, rng);
  CHECK(p.fc1_weight.size() + p.fc1_bias.size() == 4 * 8 + 8);
}

TEST_CASE("scan cost scaling") {
  for (std::size_t k : {1, 2, 4, 8}) {
    CHECK(mhss_cost(32, 8, k, 16, 16, 16) == mhss_cost(32, 8, 1, 16, 16, 16));
    const ScanCost t1 = twodss_cost(32, 1, 16, 16, 16), tk = twodss_cost(32, k, 16, 16, 16);
    CHECK(tk.params == k * t1.params);
    CHECK(tk.flops == k * t1.flops);
  }
  // One group spanning all channels is one 2DSS direction.
  CHECK(mhss_cost(32, 1, 1, 16, 8, 8) == twodss_cost(32, 1, 16, 8, 8));
  // With n = k groups the scan path costs at least k times less.
  const ScanCost m = mhss_cost(32, 4, 4, 16, 16, 16), t = twodss_cost(32, 4, 16, 16, 16);
  CHECK(double(t.flops) / double(m.flops) >= 4.0);
  CHECK(double(t.flops) / double(m.flops) <= 6.0);
}

TEST_CASE("scan cost matches the modules") {
  Rng rng(2);
  auto mp = MhssParams<double>::init("m", 16, 4, scan_set("all_around"), 4, rng);
  auto tp = TwoDssParams<double>::init("t", 16, scan_set("2d"), 4, rng);
  CHECK(mhss_cost(16, 4, 8, 4, 6, 5).params == mp.param_count());
  CHECK(twodss_cost(16, 4, 4, 6, 5).params == tp.param_count());
  CurveCache cache;
  Graph<double> g1, g2;
  mhss(g1.constant(Td::zeros({6, 5, 16})), mp, cache);
  twodss_forward(g2.constant(Td::zeros({6, 5, 16})), tp, cache);
  CHECK(g1.macs() == mhss_cost(16, 4, 8, 4, 6, 5).flops);
  CHECK(g2.macs() == twodss_cost(16, 4, 4, 6, 5).flops);
}

TEST_CASE("network cost report") {
  const NetConfig c = small_config();
  auto net = build_network<double>(c, 1);
  const CostReport r = count_cost(c, 24, 40);
  CHECK(r.params == net.param_count());
  CHECK(r.flops == measured_flops(net, 24, 40));
  std::uint64_t p = 0, f = 0;
  for (const auto& e : r.breakdown) {
    p += e.params;
    f += e.flops;
  }
  CHECK(p == r.params);
  CHECK(f == r.flops);
  // Padding: 21x37 pads to 24x40.
  CHECK(count_flops(c, 21, 37) == r.flops);
  std::ostringstream os;
  r.write_csv(os);
  CHECK(os.str().starts_with("module,params,flops\n"));
  CHECK(os.str().find("\ntotal," + std::to_string(r.params) + "," + std::to_string(r.flops) + "\n") !=
        std::string::npos);
  CHECK(os.str().find('\r') == std::string::npos);
}

TEST_CASE("params independent of seed and of k for the mhss path") {
  NetConfig c = small_config();
  CHECK(build_network<float>(c, 1).param_count() == build_network<float>(c, 9).param_count());
  c.scan_set = "horizontal";
  const auto one = count_cost(c, 32, 32);
  for (const char* set : {"2d", "all_around"}) {
    c.scan_set = set;
    const auto r = count_cost(c, 32, 32);
    CHECK(r.params == one.params);
    CHECK(r.flops == one.flops);
  }
}

TEST_CASE("erf of the identity network is a delta") {
  auto net = build_network<double>(small_config(), 3);
  net.zero_output_projections();
  const ErfMap m = erf_map(net, random_images(2, 12, 10, 4), 5, 7);
  check_normalized(m);
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t c = 0; c < 10; ++c) CHECK(m.at(r, c) == (r == 5 && c == 7 ? 1.0 : 0.0));
}

TEST_CASE("erf of one depthwise convolution has 3x3 support") {
  Rng rng(5);
  Td k = uniform<double>({3, 3, 3}, 0.5, 1.5, rng);
  auto f = [&](Var<double> x) { return dwconv2d<double>(x, x.graph().constant(k)); };
  const ErfMap m = erf_map(f, random_images(3, 9, 9, 6), 4, 3);
  check_normalized(m);
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t c = 0; c < 9; ++c) {
      const bool inside = r >= 3 && r <= 5 && c >= 2 && c <= 4;
      CHECK((m.at(r, c) > 0.0) == inside);
    }
}

TEST_CASE("erf of a random network is normalized") {
  auto net = build_network<double>(small_config(), 7);
  const ErfMap m = erf_map(net, random_images(2, 16, 16, 8), 8, 8);
  check_normalized(m);
  for (auto* p : net.parameters())
    for (double v : p->grad.data()) CHECK(v == 0.0);
  const double cone = m.diagonal_cone_mass();
  CHECK(cone >= 0.0);
  CHECK(cone <= 1.0);
}

TEST_CASE("erf errors and output") {
  auto net = build_network<double>(small_config(), 9);
  CHECK_THROWS_AS(erf_map(net, {}, 0, 0), ConfigError);
  CHECK_THROWS_AS(erf_map(net, random_images(1, 8, 8, 1), 8, 0), ConfigError);
  ErfMap m;
  m.height = 2;
  m.width = 2;
  m.values = {0.5, 0.25, 0.25, 0.0};
  std::ostringstream os;
  m.write_csv(os);
  CHECK(os.str() ==
        "row,col,value\n0,0,5.000000000e-01\n0,1,2.500000000e-01\n1,0,2.500000000e-01\n1,1,0.000000000e+00\n");
}

TEST_CASE("diagonal cone mass") {
  ErfMap m;
  m.height = m.width = 9;
  m.row = m.col = 4;
  m.values.assign(81, 0.0);
  m.values[4 * 9 + 4] = 0.5;
  m.values[2 * 9 + 2] = 0.25;  // on the diagonal
  m.values[4 * 9 + 8] = 0.25;  // on the row
  CHECK(m.diagonal_cone_mass() == doctest::Approx(0.5));
}

TEST_CASE("locality report") {
  const auto rows = locality_report("2d", 16, 16);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].profile.mean_vertical_pair == 16.0);
  const auto one = locality_report("all_around", 1, 1);
  for (const auto& r : one) CHECK(r.profile.pair_count == 0);
  std::ostringstream os;
  write_locality_csv(os, locality_report("hilbert", 8, 8));
  CHECK(os.str().starts_with("curve,pairs,mean_distance,max_distance,mean_horizontal,mean_vertical,adjacent_fraction\nhilbert,112,"));
}

TEST_CASE("network gradient check") {
  const GradCheckResult r = network_grad_check(small_config(), 1, 8, 2);
  CHECK(r.max_rel_error < 1e-4);
  CHECK(r.coords_checked > 0);
}
