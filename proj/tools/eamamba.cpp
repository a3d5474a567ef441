#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "eamamba/analysis.hpp"
#include "eamamba/checkpoint.hpp"
#include "eamamba/config.hpp"
#include "eamamba/errors.hpp"
#include "eamamba/image_io.hpp"
#include "eamamba/mhssm.hpp"
#include "eamamba/train.hpp"

namespace fs = std::filesystem;
using namespace eamamba;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kNumeric = 3 };

// "default" and "tiny" name the built-in network presets; anything else is
// a config file.
NetConfig net_config_arg(const std::string& arg) {
  if (arg == "default") return NetConfig{};
  if (arg == "tiny") return NetConfig::tiny();
  std::ifstream f(arg);
  if (!f) throw ConfigError("cannot open config '" + arg + "'");
  return parse_run_config(f).net;
}

int cmd_train(const std::string& config, const std::string& out_dir, const std::string& log_path,
              bool quiet) {
  const RunConfig rc = load_run_config(config);
  RestorationNet<float> net = build_network<float>(rc.net, rc.train.seed);
  const auto train_data = synth_dataset(rc.train_data);
  const auto val_data = synth_dataset(rc.val_data);
  TrainOptions opt;
  opt.dump_dir = fs::path(out_dir) / "nan_dump";
  if (!quiet)
    opt.on_step = [&](const LogRow& r) {
      if (r.iteration % 50 == 0 || r.iteration + 1 == rc.train.iterations)
        std::fprintf(stderr, "iter %zu lr %.3e loss %.6f patch %zu batch %zu\n", r.iteration, r.lr,
                     r.loss, r.patch, r.batch);
    };
  const auto log = train(net, train_data, rc.train, opt);
  save_checkpoint(out_dir, net);
  {
    std::ofstream f(log_path.empty() ? fs::path(out_dir) / "train_log.csv" : fs::path(log_path),
                    std::ios::binary);
    write_log_csv(f, log);
  }
  const EvalResult ev = evaluate(net, val_data);
  std::printf("noisy_psnr,restored_psnr,restored_ssim\n%.4f,%.4f,%.4f\n", ev.noisy_psnr,
              ev.restored_psnr, ev.restored_ssim);
  return kOk;
}

int cmd_infer(const std::string& ckpt, const std::string& input, const std::string& output) {
  RestorationNet<float> net = load_checkpoint(ckpt);
  const Tensor<float> img = read_image(input);
  if (img.extent(2) != 3) throw ConfigError("infer: input must be an RGB (P6) image");
  write_image(output, infer(net, img));
  return kOk;
}

int cmd_erf(const std::string& ckpt, const SynthSpec& spec, std::size_t row, std::size_t col,
            const std::string& prefix) {
  RestorationNet<float> net = load_checkpoint(ckpt);
  std::vector<Tensor<double>> images;
  for (const ImagePair& p : synth_dataset(spec)) images.push_back(p.degraded.cast<double>());
  const ErfMap map = erf_map(net, images, row, col);
  map.write_pgm(prefix + ".pgm");
  std::ofstream f(prefix + ".csv", std::ios::binary);
  map.write_csv(f);
  std::printf("diagonal_cone_mass,%.6f\n", map.diagonal_cone_mass());
  return kOk;
}

int cmd_cost(const std::string& config, std::size_t h, std::size_t w) {
  const NetConfig cfg = net_config_arg(config);
  count_cost(cfg, h, w).write_csv(std::cout);
  return kOk;
}

int cmd_curves(const std::string& kind, std::size_t h, std::size_t w, bool locality) {
  if (locality) {
    write_locality_csv(std::cout, locality_report(kind, h, w));
    return kOk;
  }
  CurveSpec spec;
  try {
    spec = parse_curve_spec(kind);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const ScanCurve c = build_curve(spec, h, w);
  std::cout << "step,row,col\n";
  for (std::size_t t = 0; t < c.length(); ++t)
    std::cout << t << ',' << c.row(t) << ',' << c.col(t) << '\n';
  return kOk;
}

int cmd_gradcheck(const std::string& config, std::uint64_t seed, std::size_t size,
                  std::size_t coords) {
  const NetConfig cfg = net_config_arg(config);
  const GradCheckResult r = network_grad_check(cfg, seed, size, coords);
  std::printf("max_rel_error,coords_checked\n%.3e,%zu\n", r.max_rel_error, r.coords_checked);
  return r.max_rel_error < 1e-4 ? kOk : kNumeric;
}

int cmd_scan_bench(std::size_t channels, std::size_t groups, std::size_t d_state, std::size_t size) {
  std::cout << "k,mhss_params,mhss_flops,twodss_params,twodss_flops,flop_ratio\n";
  for (std::size_t k : {1, 2, 4, 8}) {
    const ScanCost m = mhss_cost(channels, groups, k, d_state, size, size);
    const ScanCost t = twodss_cost(channels, k, d_state, size, size);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", double(t.flops) / double(m.flops));
    std::cout << k << ',' << m.params << ',' << m.flops << ',' << t.params << ',' << t.flops << ','
              << buf << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EAMamba restoration toolkit"};
  app.require_subcommand(1);

  std::string config, out_dir, log_path, ckpt, input, output, prefix = "erf", kind;
  std::size_t h = 256, w = 256, row = 0, col = 0, size = 16, coords = 4;
  std::size_t channels = 32, groups = 8, d_state = 16;
  std::uint64_t seed = 1;
  bool quiet = false, locality = false;
  SynthSpec erf_spec{25.0, 8, 32, 32, 7};

  auto* train_cmd = app.add_subcommand("train", "Train on synthetic data and write a checkpoint");
  train_cmd->add_option("config", config, "Run config file")->required();
  train_cmd->add_option("out", out_dir, "Checkpoint directory")->required();
  train_cmd->add_option("--log", log_path, "Loss log CSV (default <out>/train_log.csv)");
  train_cmd->add_flag("--quiet", quiet, "No progress output");

  auto* infer_cmd = app.add_subcommand("infer", "Restore one image");
  infer_cmd->add_option("checkpoint", ckpt)->required();
  infer_cmd->add_option("input", input, "P6 image")->required();
  infer_cmd->add_option("output", output, "P6 image")->required();

  auto* erf_cmd = app.add_subcommand("erf", "Effective receptive field of a checkpoint");
  erf_cmd->add_option("checkpoint", ckpt)->required();
  erf_cmd->add_option("--row", row, "Target row")->required();
  erf_cmd->add_option("--col", col, "Target column")->required();
  erf_cmd->add_option("--count", erf_spec.count, "Number of synthetic images");
  erf_cmd->add_option("--size", erf_spec.height, "Synthetic image side");
  erf_cmd->add_option("--sigma", erf_spec.sigma, "Noise level (8-bit scale)");
  erf_cmd->add_option("--seed", erf_spec.seed, "Dataset seed");
  erf_cmd->add_option("--out", prefix, "Output prefix for .pgm and .csv");

  auto* cost_cmd = app.add_subcommand("cost", "Parameter and FLOP breakdown as CSV");
  cost_cmd->add_option("config", config, "Config file, 'default' or 'tiny'")->required();
  cost_cmd->add_option("height", h)->required();
  cost_cmd->add_option("width", w)->required();

  auto* curves_cmd = app.add_subcommand("curves", "Scan-curve trajectory as CSV");
  curves_cmd->add_option("kind", kind, "Curve name, e.g. hilbert or vertical_rev")->required();
  curves_cmd->add_option("height", h)->required();
  curves_cmd->add_option("width", w)->required();
  curves_cmd->add_flag("--locality", locality, "Treat kind as a scan set and report locality");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of a 64-bit network");
  grad_cmd->add_option("config", config, "Config file, 'default' or 'tiny'")->required();
  grad_cmd->add_option("--seed", seed);
  grad_cmd->add_option("--size", size, "Input side");
  grad_cmd->add_option("--coords", coords, "Coordinates per parameter tensor");

  auto* bench_cmd = app.add_subcommand("scan-bench", "MHSS vs 2DSS cost over the number of curves");
  bench_cmd->add_option("--channels", channels);
  bench_cmd->add_option("--groups", groups);
  bench_cmd->add_option("--d-state", d_state);
  bench_cmd->add_option("--size", size);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config, out_dir, log_path, quiet);
    if (*infer_cmd) return cmd_infer(ckpt, input, output);
    if (*erf_cmd) {
      erf_spec.width = erf_spec.height;
      return cmd_erf(ckpt, erf_spec, row, col, prefix);
    }
    if (*cost_cmd) return cmd_cost(config, h, w);
    if (*curves_cmd) return cmd_curves(kind, h, w, locality);
    if (*grad_cmd) return cmd_gradcheck(config, seed, size, coords);
    if (*bench_cmd) return cmd_scan_bench(channels, groups, d_state, size);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kConfig;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
