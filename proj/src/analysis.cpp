#include "eamamba/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "eamamba/errors.hpp"
#include "eamamba/image_io.hpp"
#include "eamamba/ops.hpp"

namespace eamamba {

void CostReport::add(std::string module, std::uint64_t p, std::uint64_t f) {
  breakdown.push_back({std::move(module), p, f});
  params += p;
  flops += f;
}

void CostReport::write_csv(std::ostream& os) const {
  os << "module,params,flops\n";
  for (const auto& e : breakdown) os << e.module << ',' << e.params << ',' << e.flops << '\n';
  os << "total," << params << ',' << flops << '\n';
}

namespace {

using u64 = std::uint64_t;

u64 ssm_params(u64 cg, u64 ns) { return cg * cg + 2 * cg + 3 * cg * ns; }

void block_cost(CostReport& r, const std::string& prefix, const NetConfig& cfg, u64 c, u64 L) {
  const u64 d = expanded_channels(c, cfg.expansion);
  const u64 n = cfg.groups, cg = d / n, ns = cfg.d_state;
  r.add(prefix + ".norm1", 2 * c, 0);
  r.add(prefix + ".mhssm.in_proj", 2 * c * d, 2 * L * c * d);
  r.add(prefix + ".mhssm.dwconv", 9 * d + d, L * d * 9);
  r.add(prefix + ".mhssm.scan", n * ssm_params(cg, ns), n * selective_scan_macs(L, cg, ns));
  r.add(prefix + ".mhssm.norm", 2 * d, 0);
  r.add(prefix + ".mhssm.out_proj", d * c, L * d * c);
  if (cfg.mlp_kind == MlpKind::none) return;
  r.add(prefix + ".norm2", 2 * c, 0);
  const u64 h = expanded_channels(c, cfg.mlp_expansion);
  switch (cfg.mlp_kind) {
    case MlpKind::ffn:
      r.add(prefix + ".mlp", c * h + h + h * c + c, 2 * L * c * h);
      break;
    case MlpKind::gdfn:
      r.add(prefix + ".mlp", c * 2 * h + 2 * h + 9 * 2 * h + 2 * h + h * c + c,
            L * c * 2 * h + L * 2 * h * 9 + L * h * c);
      break;
    case MlpKind::simple_ffn:
      r.add(prefix + ".mlp", c * h + h + (h / 2) * c + c, L * c * h + L * (h / 2) * c);
      break;
    case MlpKind::channel_attention:
      r.add(prefix + ".mlp", c * h + h + h * c + c, c * h + h * c);
      break;
    case MlpKind::none:
      break;
  }
}

}  // namespace

CostReport count_cost(const NetConfig& cfg, std::size_t height, std::size_t width) {
  cfg.validate();
  if (height == 0 || width == 0) throw ConfigError("cost: extents must be positive");
  const std::size_t m = cfg.pad_multiple();
  const u64 H = (height + m - 1) / m * m, W = (width + m - 1) / m * m;
  CostReport r;
  r.height = height;
  r.width = width;
  const u64 C = cfg.base_channels, levels = cfg.levels();
  auto area = [&](u64 level) { return (H >> level) * (W >> level); };

  r.add("embed", 27 * C + C, area(0) * 27 * C);
  for (u64 l = 0; l + 1 < levels; ++l) {
    const u64 w = cfg.width(l);
    for (std::size_t b = 0; b < cfg.level_blocks[l]; ++b)
      block_cost(r, "encoder" + std::to_string(l) + ".block" + std::to_string(b), cfg, w, area(l));
    r.add("down" + std::to_string(l), 4 * w * 2 * w, area(l + 1) * 4 * w * 2 * w);
  }
  for (std::size_t b = 0; b < cfg.level_blocks[levels - 1]; ++b)
    block_cost(r, "bottleneck.block" + std::to_string(b), cfg, cfg.width(levels - 1),
               area(levels - 1));
  for (u64 l = levels - 1; l-- > 0;) {
    const u64 w = cfg.width(l);
    r.add("up" + std::to_string(l), 2 * w * 4 * w, area(l + 1) * 2 * w * 4 * w);
    r.add("merge" + std::to_string(l), 2 * w * w, area(l) * 2 * w * w);
    for (std::size_t b = 0; b < cfg.level_blocks[l]; ++b)
      block_cost(r, "decoder" + std::to_string(l) + ".block" + std::to_string(b), cfg, w, area(l));
  }
  for (std::size_t b = 0; b < cfg.refinement_blocks; ++b)
    block_cost(r, "refinement.block" + std::to_string(b), cfg, C, area(0));
  r.add("output", 9 * C * 3 + 3, area(0) * 9 * C * 3);
  return r;
}

std::uint64_t count_flops(const NetConfig& cfg, std::size_t height, std::size_t width) {
  return count_cost(cfg, height, width).flops;
}

template <typename T>
std::uint64_t measured_flops(RestorationNet<T>& net, std::size_t height, std::size_t width) {
  Graph<T> g(false);
  forward(net, g.constant(Tensor<T>::zeros({height, width, 3})));
  return g.macs();
}

ScanCost mhss_cost(std::size_t channels, std::size_t groups, std::size_t curves,
                   std::size_t d_state, std::size_t height, std::size_t width) {
  validate_mhss(channels, groups, curves);
  const u64 cg = channels / groups, L = u64(height) * width;
  return {groups * ssm_params(cg, d_state), groups * selective_scan_macs(L, cg, d_state)};
}

ScanCost twodss_cost(std::size_t channels, std::size_t curves, std::size_t d_state,
                     std::size_t height, std::size_t width) {
  validate_mhss(channels, 1, curves);
  const u64 L = u64(height) * width;
  return {curves * ssm_params(channels, d_state), curves * selective_scan_macs(L, channels, d_state)};
}

double ErfMap::diagonal_cone_mass(double half_angle_deg) const {
  double cone = 0.0, total = 0.0;
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      if (r == row && c == col) continue;
      const double v = at(r, c);
      const double dr = std::abs(double(r) - double(row));
      const double dc = std::abs(double(c) - double(col));
      const double angle = std::atan2(dr, dc) * 180.0 / std::numbers::pi;
      total += v;
      if (std::abs(angle - 45.0) <= half_angle_deg) cone += v;
    }
  return total > 0.0 ? cone / total : 0.0;
}

void ErfMap::write_csv(std::ostream& os) const {
  os << "row,col,value\n";
  char buf[64];
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      std::snprintf(buf, sizeof buf, "%.9e", at(r, c));
      os << r << ',' << c << ',' << buf << '\n';
    }
}

void ErfMap::write_pgm(const std::string& path) const {
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, v);
  Tensor<float> img({height, width, 1});
  for (std::size_t i = 0; i < values.size(); ++i)
    img[i] = peak > 0.0 ? static_cast<float>(values[i] / peak) : 0.0f;
  write_image(path, img);
}

namespace {

template <typename T>
ErfMap erf_impl(const std::function<Var<T>(Var<T>)>& f, const std::vector<Tensor<double>>& images,
                std::size_t row, std::size_t col) {
  if (images.empty()) throw ConfigError("erf_map: no images given");
  const Shape& s0 = images.front().shape();
  if (s0.size() != 3) throw DimensionError("erf_map: images must be [H, W, C]");
  const std::size_t H = s0[0], W = s0[1];
  if (row >= H || col >= W)
    throw ConfigError("erf_map: target (" + std::to_string(row) + ", " + std::to_string(col) +
                      ") outside " + std::to_string(H) + "x" + std::to_string(W) + " image");
  ErfMap map;
  map.height = H;
  map.width = W;
  map.row = row;
  map.col = col;
  map.values.assign(H * W, 0.0);
  for (const auto& img : images) {
    require_same_shape(img.shape(), s0, "erf_map images");
    Graph<T> g;
    Var<T> x = g.leaf(img.template cast<T>(), true);
    g.backward(pixel_sum(f(x), row, col));
    const Tensor<T>* grad = g.grad(x);
    if (!grad) continue;
    const std::size_t C = s0[2];
    for (std::size_t p = 0; p < H * W; ++p) {
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) acc += std::abs(double((*grad)[p * C + c]));
      map.values[p] += acc;
    }
  }
  double total = 0.0;
  for (double& v : map.values) {
    v /= double(images.size());
    total += v;
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw NumericError("erf_map: output does not depend on the input");
  for (double& v : map.values) v /= total;
  return map;
}

}  // namespace

ErfMap erf_map(const ImageFn& f, const std::vector<Tensor<double>>& images, std::size_t row,
               std::size_t col) {
  return erf_impl<double>(f, images, row, col);
}

template <typename T>
ErfMap erf_map(RestorationNet<T>& net, const std::vector<Tensor<double>>& images, std::size_t row,
               std::size_t col) {
  ErfMap map = erf_impl<T>([&net](Var<T> x) { return forward(net, x); }, images, row, col);
  net.visit([](Parameter<T>& p) { p.zero_grad(); });
  return map;
}

GradCheckResult network_grad_check(const NetConfig& cfg, std::uint64_t seed, std::size_t size,
                                   std::size_t max_coords) {
  RestorationNet<double> net = build_network<double>(cfg, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const Tensor<double> image = uniform<double>({size, size, 3}, 0.0, 1.0, rng);
  const Tensor<double> weights = uniform<double>({size, size, 3}, -1.0, 1.0, rng);
  std::vector<Parameter<double>*> params = net.parameters();
  auto loss = [&](Graph<double>& g) {
    return sum(mul(forward(net, g.constant(image)), g.constant(weights)));
  };
  return grad_check_params(loss, params, 1e-5, max_coords);
}

std::vector<LocalityRow> locality_report(const std::string& set, std::size_t height,
                                         std::size_t width) {
  std::vector<LocalityRow> rows;
  for (CurveSpec spec : NetConfig::scan_set_curves(set))
    rows.push_back({spec, locality_profile(build_curve(spec, height, width))});
  return rows;
}

void write_locality_csv(std::ostream& os, const std::vector<LocalityRow>& rows) {
  os << "curve,pairs,mean_distance,max_distance,mean_horizontal,mean_vertical,adjacent_fraction\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%zu,%.6f,%.6f,%.6f", r.profile.pair_count,
                  r.profile.mean_1d_distance, r.profile.max_1d_distance,
                  r.profile.mean_horizontal_pair, r.profile.mean_vertical_pair,
                  r.profile.adjacent_fraction);
    os << to_string(r.curve) << ',' << buf << '\n';
  }
}

template std::uint64_t measured_flops(RestorationNet<float>&, std::size_t, std::size_t);
template std::uint64_t measured_flops(RestorationNet<double>&, std::size_t, std::size_t);
template ErfMap erf_map(RestorationNet<float>&, const std::vector<Tensor<double>>&, std::size_t,
                        std::size_t);
template ErfMap erf_map(RestorationNet<double>&, const std::vector<Tensor<double>>&, std::size_t,
                        std::size_t);

}  // namespace eamamba
