#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "eamamba/analysis.hpp"
#include "eamamba/checkpoint.hpp"
#include "eamamba/config.hpp"
#include "eamamba/grad_check.hpp"
#include "eamamba/ops.hpp"
#include "eamamba/train.hpp"
#include "reference/reference.hpp"

using namespace eamamba;
namespace fs = std::filesystem;
using Td = Tensor<double>;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kCurveSweepSeconds = 10.0;
constexpr int kScanCases = 200;
constexpr double kScanRelTol = 1e-12;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 120.0;
constexpr double kParamsTarget = 25.3e6;
constexpr double kParamsTol = 0.20;
constexpr double kFlopsTarget = 137e9;
constexpr double kFlopsTol = 0.30;
constexpr int kIdentityImages = 20;
constexpr double kDenoiseGainDb = 3.0;
constexpr double kErfSumTol = 1e-9;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 -----------------------------------------------------------------------

void curve_sweep() {
  const auto t0 = Clock::now();
  std::size_t checked = 0, bad = 0;
  for (CurveKind kind : kAllCurveKinds)
    for (std::size_t h = 1; h <= 16; ++h)
      for (std::size_t w = 1; w <= 16; ++w) {
        const ScanCurve fwd = build_curve(kind, false, h, w);
        const ScanCurve rev = build_curve(kind, true, h, w);
        for (const ScanCurve* c : {&fwd, &rev}) {
          ++checked;
          std::vector<char> seen(h * w, 0);
          bool ok = c->order.size() == h * w && c->inverse.size() == h * w;
          for (std::size_t t = 0; ok && t < c->order.size(); ++t) {
            const std::size_t cell = c->order[t];
            ok = cell < h * w && !seen[cell] && c->inverse[cell] == t;
            if (ok) seen[cell] = 1;
          }
          if (ok) {
            // apply/invert round trip on a labelled grid
            Graph<double> g(false);
            Td x({h, w, 1});
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = double(i);
            const Td seq = apply_curve(g.constant(x), *c).value();
            for (std::size_t t = 0; ok && t < seq.size(); ++t) ok = seq[t] == double(c->order[t]);
            ok = ok && invert_curve(apply_curve(g.constant(x), *c), *c).value() == x;
          }
          bad += !ok;
        }
        for (std::size_t t = 0; t < h * w; ++t)
          if (rev.order[t] != fwd.order[h * w - 1 - t]) {
            ++bad;
            break;
          }
      }
  const double secs = seconds_since(t0);
  report(1, bad == 0 && secs < kCurveSweepSeconds,
         fmt("%zu curves, %zu failures, %.2f s (limit %.0f s)", checked, bad, secs, kCurveSweepSeconds));
}

// 2 -----------------------------------------------------------------------

void scan_oracle() {
  Rng rng(2024);
  double worst = 0;
  std::size_t causal_bad = 0;
  for (int rep = 0; rep < kScanCases; ++rep) {
    const std::size_t L = 1 + rng() % 16, cg = 1 + rng() % 4, ns = 1 + rng() % 4;
    SsmParams<double> p = SsmParams<double>::init("s", cg, ns, rng);
    p.delta_weight.value = normal<double>({cg, cg}, 0.5, rng);
    p.delta_bias.value = normal<double>({cg}, 0.5, rng);
    p.a_log.value = normal<double>({cg, ns}, 0.5, rng);
    p.b_proj.value = normal<double>({cg, ns}, 0.5, rng);
    p.c_proj.value = normal<double>({cg, ns}, 0.5, rng);
    p.d_skip.value = normal<double>({cg}, 1.0, rng);
    p.simplified_bbar = rep % 5 == 4;
    const Td u = normal<double>({L, cg}, 1.0, rng);
    auto run = [&](const Td& in) {
      Graph<double> g(false);
      return selective_scan(g.constant(in), bind(g, p)).value();
    };
    const Td y = run(u);
    const Td ref = reference::selective_scan_ref(u, p);
    double diff = 0, scale = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      diff = std::max(diff, std::abs(y[i] - ref[i]));
      scale = std::max(scale, std::abs(ref[i]));
    }
    worst = std::max(worst, scale > 0 ? diff / scale : diff);
    // perturb the future, the past must not move
    const std::size_t t = rng() % L;
    Td v = u;
    for (std::size_t k = t + 1; k < L; ++k)
      for (std::size_t c = 0; c < cg; ++c) v[k * cg + c] += normal<double>({1}, 3.0, rng)[0];
    const Td yv = run(v);
    for (std::size_t i = 0; i < (t + 1) * cg; ++i) causal_bad += yv[i] != y[i];
  }
  report(2, worst < kScanRelTol && causal_bad == 0,
         fmt("%d cases, max normwise relative error %.3e (limit %.0e), causality violations %zu",
             kScanCases, worst, kScanRelTol, causal_bad));
}

// 3 -----------------------------------------------------------------------

void gradient_suite() {
  const auto t0 = Clock::now();
  Rng rng(3);
  auto rnd = [&](Shape s) { return normal<double>(std::move(s), 1.0, rng); };
  auto weight = [](Graph<double>& g, const Shape& s) {
    Rng r(77);
    return g.constant(normal<double>(s, 1.0, r));
  };
  auto probe = [&](Graph<double>& g, Var<double> y) { return sum(mul(y, weight(g, y.shape()))); };
  std::vector<std::pair<std::string, double>> errs;

  errs.emplace_back("silu", grad_check(
      [&](Graph<double>& g, std::span<const Var<double>> in) { return probe(g, silu(in[0])); },
      {rnd({5, 4})}).max_rel_error);
  errs.emplace_back("layer_norm", grad_check(
      [&](Graph<double>& g, std::span<const Var<double>> in) {
        return probe(g, layer_norm(in[0], in[1], in[2]));
      },
      {rnd({4, 6}), rnd({6}), rnd({6})}).max_rel_error);
  errs.emplace_back("dwconv2d", grad_check(
      [&](Graph<double>& g, std::span<const Var<double>> in) {
        return probe(g, dwconv2d<double>(in[0], in[1], std::optional(in[2])));
      },
      {rnd({5, 6, 3}), rnd({3, 3, 3}), rnd({3})}).max_rel_error);
  errs.emplace_back("linear", grad_check(
      [&](Graph<double>& g, std::span<const Var<double>> in) {
        return probe(g, linear<double>(in[0], in[1], std::optional(in[2])));
      },
      {rnd({4, 5}), rnd({5, 3}), rnd({3})}).max_rel_error);

  for (bool simplified : {false, true}) {
    SsmParams<double> p = SsmParams<double>::init("s", 3, 4, rng);
    p.delta_weight.value = normal<double>({3, 3}, 0.5, rng);
    p.b_proj.value = normal<double>({3, 4}, 0.5, rng);
    p.c_proj.value = normal<double>({3, 4}, 0.5, rng);
    p.simplified_bbar = simplified;
    const Td u = rnd({9, 3});
    auto loss = [&](Graph<double>& g, Var<double> uv) { return probe(g, selective_scan(uv, bind(g, p))); };
    std::vector<Parameter<double>*> params;
    p.visit([&](Parameter<double>& q) { params.push_back(&q); });
    const double e = std::max(grad_check([&](Var<double> uv) { return loss(uv.graph(), uv); }, u),
                              grad_check_params([&](Graph<double>& g) { return loss(g, g.constant(u)); },
                                                params).max_rel_error);
    errs.emplace_back(simplified ? "selective_scan (simplified)" : "selective_scan", e);
  }

  {
    auto p = MhssmParams<double>::init("b", 8, 2.0, 4, scan_set("all_around"), 4, rng);
    const Td x = rnd({6, 7, 8});
    CurveCache cache;
    auto loss = [&](Graph<double>& g, Var<double> xv) { return probe(g, mhssm_forward(xv, p, cache)); };
    std::vector<Parameter<double>*> params;
    p.visit([&](Parameter<double>& q) { params.push_back(&q); });
    errs.emplace_back("mhssm_forward",
                      std::max(grad_check([&](Var<double> xv) { return loss(xv.graph(), xv); }, x),
                               grad_check_params([&](Graph<double>& g) { return loss(g, g.constant(x)); },
                                                 params, 1e-4, 8).max_rel_error));
  }

  for (MlpKind kind : {MlpKind::simple_ffn, MlpKind::ffn, MlpKind::gdfn, MlpKind::channel_attention}) {
    BlockParams<double>::Options opt;
    opt.groups = 4;
    opt.curves = scan_set("all_around");
    opt.d_state = 4;
    opt.mlp_kind = kind;
    auto b = BlockParams<double>::init("blk", 8, opt, rng);
    const Td x = rnd({5, 6, 8});
    CurveCache cache;
    auto loss = [&](Graph<double>& g, Var<double> xv) { return probe(g, mambaformer_forward(xv, b, cache)); };
    std::vector<Parameter<double>*> params;
    b.visit([&](Parameter<double>& q) { params.push_back(&q); });
    errs.emplace_back("mambaformer_forward/" + to_string(kind),
                      std::max(grad_check([&](Var<double> xv) { return loss(xv.graph(), xv); }, x),
                               grad_check_params([&](Graph<double>& g) { return loss(g, g.constant(x)); },
                                                 params, 1e-4, 6).max_rel_error));
  }

  errs.emplace_back("tiny network", network_grad_check(NetConfig::tiny(), 1, 8, 2).max_rel_error);

  double worst = 0;
  std::string parts;
  for (const auto& [name, e] : errs) {
    worst = std::max(worst, e);
    std::printf("  grad %-36s %.3e\n", name.c_str(), e);
  }
  const double secs = seconds_since(t0);
  report(3, worst < kGradTol && secs < kGradSeconds,
         fmt("%zu checks, max relative error %.3e (limit %.0e), %.1f s (limit %.0f s)", errs.size(),
             worst, kGradTol, secs, kGradSeconds));
}

// 4 -----------------------------------------------------------------------

const std::pair<std::size_t, const char*> kSets[] = {
    {1, "horizontal"}, {2, "hilbert"}, {4, "2d"}, {8, "all_around"}};

void cost_scaling() {
  bool ok = true;
  NetConfig small = NetConfig::tiny();
  small.base_channels = 16;
  small.groups = 8;
  small.d_state = 8;

  // mhss path: analytic, module-measured and whole-network numbers
  const ScanCost m1 = mhss_cost(64, 8, 1, 8, 32, 32);
  const ScanCost t1 = twodss_cost(64, 1, 8, 32, 32);
  std::uint64_t net_params1 = 0, net_flops1 = 0, mod_macs1 = 0, two_macs1 = 0, two_params1 = 0;
  for (auto [k, set] : kSets) {
    ok &= mhss_cost(64, 8, k, 8, 32, 32) == m1;
    const ScanCost tk = twodss_cost(64, k, 8, 32, 32);
    ok &= tk.params == k * t1.params && tk.flops == k * t1.flops;

    Rng rng(4);
    auto mp = MhssParams<double>::init("m", 64, 8, scan_set(set), 8, rng);
    auto tp = TwoDssParams<double>::init("t", 64, scan_set(set), 8, rng);
    CurveCache cache;
    Graph<double> g1(false), g2(false);
    mhss(g1.constant(Td::zeros({32, 32, 64})), mp, cache);
    twodss_forward(g2.constant(Td::zeros({32, 32, 64})), tp, cache);
    if (k == 1) {
      mod_macs1 = g1.macs();
      two_macs1 = g2.macs();
      two_params1 = tp.param_count();
    }
    ok &= g1.macs() == mod_macs1 && mp.param_count() == m1.params && g1.macs() == m1.flops;
    ok &= g2.macs() == k * two_macs1 && tp.param_count() == k * two_params1;

    small.scan_set = set;
    const CostReport r = count_cost(small, 64, 64);
    auto net = build_network<float>(small, 1);
    const std::uint64_t measured = measured_flops(net, 64, 64);
    if (k == 1) {
      net_params1 = r.params;
      net_flops1 = r.flops;
    }
    ok &= r.params == net_params1 && r.flops == net_flops1 && net.param_count() == r.params &&
          measured == r.flops;
    std::printf("  k=%zu mhss %llu params %llu flops | twodss %llu params %llu flops | net %llu / %llu\n",
                k, (unsigned long long)mhss_cost(64, 8, k, 8, 32, 32).params,
                (unsigned long long)mhss_cost(64, 8, k, 8, 32, 32).flops,
                (unsigned long long)tk.params, (unsigned long long)tk.flops,
                (unsigned long long)r.params, (unsigned long long)r.flops);
  }

  const CostReport def = count_cost(NetConfig{}, 256, 256);
  const double dp = double(def.params) / kParamsTarget - 1.0;
  const double df = double(def.flops) / kFlopsTarget - 1.0;
  const bool recon = std::abs(dp) <= kParamsTol && std::abs(df) <= kFlopsTol;
  report(4, ok && recon,
         fmt("k-scaling %s; default net %.2f M params (%+.1f%%, limit 20%%), %.1f G flops at 256x256 "
             "(%+.1f%%, limit 30%%)",
             ok ? "exact" : "BROKEN", double(def.params) / 1e6, 100 * dp, double(def.flops) / 1e9,
             100 * df));
}

// 5 -----------------------------------------------------------------------

void mlp_ordering() {
  auto net_cost = [](MlpKind kind) {
    NetConfig c;
    c.mlp_kind = kind;
    return count_cost(c, 256, 256);
  };
  const auto none = net_cost(MlpKind::none), ffn = net_cost(MlpKind::ffn),
             gdfn = net_cost(MlpKind::gdfn), simple = net_cost(MlpKind::simple_ffn),
             ca = net_cost(MlpKind::channel_attention);
  const bool order = gdfn.params > ffn.params && ffn.params > simple.params && simple.params > none.params;

  // per block at the default width
  auto block_flops = [](MlpKind kind) {
    Rng rng(5);
    auto p = ChannelMlpParams<double>::init("m", kind, 64, 2.0, rng);
    Graph<double> g(false);
    channel_mlp(g.constant(Td::zeros({64, 64, 64})), p);
    return g.macs();
  };
  const bool cheaper = ca.flops < ffn.flops && block_flops(MlpKind::channel_attention) < block_flops(MlpKind::ffn);
  report(5, order && cheaper,
         fmt("params gdfn %.2fM > ffn %.2fM > simple_ffn %.2fM > none %.2fM: %s; flops ca %.1fG < ffn %.1fG: %s",
             gdfn.params / 1e6, ffn.params / 1e6, simple.params / 1e6, none.params / 1e6,
             order ? "yes" : "no", ca.flops / 1e9, ffn.flops / 1e9, cheaper ? "yes" : "no"));
}

// 6 -----------------------------------------------------------------------

void residual_identity() {
  Rng rng(6);
  int exact = 0;
  const MlpKind kinds[] = {MlpKind::simple_ffn, MlpKind::ffn, MlpKind::gdfn, MlpKind::none};
  for (int i = 0; i < kIdentityImages; ++i) {
    NetConfig c = NetConfig::tiny();
    c.mlp_kind = kinds[i % 4];
    auto net = build_network<float>(c, 100 + i);
    net.zero_output_projections();
    const std::size_t h = 8 + rng() % 33, w = 8 + rng() % 33;
    const Tensor<float> x = uniform<float>({h, w, 3}, 0.0, 1.0, rng);
    exact += infer(net, x) == x;
  }
  report(6, exact == kIdentityImages, fmt("%d of %d images reproduced bit-exactly", exact, kIdentityImages));
}

// 7, 8, 9 -----------------------------------------------------------------

struct RunResult {
  EvalResult eval;
  fs::path dir;
  double seconds = 0;
};

RunResult train_run(const RunConfig& rc, const fs::path& dir) {
  const auto t0 = Clock::now();
  fs::remove_all(dir);
  fs::create_directories(dir);
  RestorationNet<float> net = build_network<float>(rc.net, rc.train.seed);
  TrainOptions opt;
  opt.dump_dir = dir / "nan_dump";
  opt.on_step = [&](const LogRow& r) {
    if (r.iteration % 250 == 0 || r.iteration + 1 == rc.train.iterations)
      std::printf("  [%s] iter %zu lr %.3e loss %.6f patch %zu batch %zu\n",
                  dir.filename().string().c_str(), r.iteration, r.lr, r.loss, r.patch, r.batch);
    std::fflush(stdout);
  };
  const auto log = train(net, synth_dataset(rc.train_data), rc.train, opt);
  save_checkpoint(dir / "checkpoint", net);
  {
    std::ofstream f(dir / "train_log.csv", std::ios::binary);
    write_log_csv(f, log);
  }
  RunResult r;
  r.eval = evaluate(net, synth_dataset(rc.val_data));
  r.dir = dir;
  r.seconds = seconds_since(t0);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Every regular file under a and b, compared byte for byte.
bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  files = fa.size();
  if (fa != fb) return false;
  for (const auto& rel : fa)
    if (slurp(a / rel) != slurp(b / rel)) return false;
  return true;
}

bool normalized(const ErfMap& m) {
  double total = 0;
  for (double v : m.values) {
    if (!(v >= 0.0)) return false;
    total += v;
  }
  return std::abs(total - 1.0) < kErfSumTol;
}

void erf_checks(const RunConfig& rc, const fs::path& all_around_ckpt, const fs::path& twod_ckpt) {
  bool ok = true;
  std::vector<Td> images;
  for (const ImagePair& p : synth_dataset(rc.val_data)) images.push_back(p.degraded.cast<double>());
  images.resize(std::min<std::size_t>(images.size(), 4));
  const std::size_t h = images[0].extent(0), w = images[0].extent(1);
  const std::size_t row = h / 2, col = w / 2;

  auto identity = build_network<double>(rc.net, 1);
  identity.zero_output_projections();
  const ErfMap id = erf_map(identity, images, row, col);
  ok &= normalized(id);
  bool delta = true;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) delta &= id.at(r, c) == (r == row && c == col ? 1.0 : 0.0);

  Rng rng(8);
  const Td kernel = uniform<double>({3, 3, 3}, 0.5, 1.5, rng);
  const ErfMap dw = erf_map([&](Var<double> x) { return dwconv2d<double>(x, x.graph().constant(kernel)); },
                            images, row, col);
  ok &= normalized(dw);
  bool support = true;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const bool inside = r + 1 >= row && r <= row + 1 && c + 1 >= col && c <= col + 1;
      support &= (dw.at(r, c) > 0.0) == inside;
    }

  auto fresh = build_network<float>(rc.net, 2);
  ok &= normalized(erf_map(fresh, images, row, col));
  auto net_a = load_checkpoint(all_around_ckpt);
  auto net_b = load_checkpoint(twod_ckpt);
  const ErfMap ea = erf_map(net_a, images, row, col), eb = erf_map(net_b, images, row, col);
  ok &= normalized(ea) && normalized(eb);
  const double cone_a = ea.diagonal_cone_mass(), cone_b = eb.diagonal_cone_mass();
  std::printf("  diagnostic: diagonal-cone mass all_around %.4f vs 2d %.4f (%s)\n", cone_a, cone_b,
              cone_a > cone_b ? "all_around higher" : "2d higher or equal");
  report(8, ok && delta && support,
         fmt("normalized %s, identity delta %s, dwconv 3x3 support %s; cone mass %.4f vs %.4f (reported only)",
             ok ? "yes" : "no", delta ? "yes" : "no", support ? "yes" : "no", cone_a, cone_b));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path config = argc > 1 ? fs::path(argv[1]) : fs::path(EAMAMBA_SOURCE_DIR) / "configs/tiny.conf";
  const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::path(EAMAMBA_BINARY_DIR) / "acceptance_runs";

  curve_sweep();
  scan_oracle();
  gradient_suite();
  cost_scaling();
  mlp_ordering();
  residual_identity();

  const RunConfig rc = load_run_config(config);
  const RunResult a = train_run(rc, work / "run_a");
  const double gain = a.eval.restored_psnr - a.eval.noisy_psnr;
  report(7, gain >= kDenoiseGainDb,
         fmt("noisy %.3f dB, restored %.3f dB, gain %+.3f dB (need %+.1f), ssim %.4f, %.0f s",
             a.eval.noisy_psnr, a.eval.restored_psnr, gain, kDenoiseGainDb, a.eval.restored_ssim, a.seconds));

  const RunResult b = train_run(rc, work / "run_b");
  RunConfig rc2d = rc;
  rc2d.net.scan_set = "2d";
  const RunResult c = train_run(rc2d, work / "run_2d");
  std::printf("  2d run: noisy %.3f dB, restored %.3f dB\n", c.eval.noisy_psnr, c.eval.restored_psnr);
  erf_checks(rc, a.dir / "checkpoint", c.dir / "checkpoint");

  std::size_t files = 0;
  const bool same_log = slurp(a.dir / "train_log.csv") == slurp(b.dir / "train_log.csv");
  const bool same_ckpt = same_tree(a.dir / "checkpoint", b.dir / "checkpoint", files);
  report(9, same_log && same_ckpt && files > 1,
         fmt("loss log identical %s, %zu checkpoint files identical %s", same_log ? "yes" : "no", files,
             same_ckpt ? "yes" : "no"));

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
