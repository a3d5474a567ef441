#include "eamamba/scan_curve.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdlib>

#include "eamamba/errors.hpp"
#include "eamamba/ops.hpp"

namespace eamamba {

namespace {

struct KindName {
  CurveKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {CurveKind::horizontal, "horizontal"},
    {CurveKind::vertical, "vertical"},
    {CurveKind::diagonal, "diagonal"},
    {CurveKind::flipped_diagonal, "flipped_diagonal"},
    {CurveKind::zigzag, "zigzag"},
    {CurveKind::zorder, "zorder"},
    {CurveKind::hilbert, "hilbert"},
};

constexpr std::string_view kReversedSuffix = "_rev";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

// Anti-diagonal sweep over an H x W grid; `direction(d)` tells whether the
// cells of diagonal d are visited with ascending row.
template <typename Direction, typename Cell>
void anti_diagonals(std::size_t H, std::size_t W, Direction ascending, Cell emit) {
  for (std::size_t d = 0; d + 1 < H + W; ++d) {
    const std::size_t r_lo = d >= W ? d - W + 1 : 0;
    const std::size_t r_hi = std::min(d, H - 1);
    if (ascending(d)) {
      for (std::size_t r = r_lo; r <= r_hi; ++r) emit(r, d - r);
    } else {
      for (std::size_t r = r_hi + 1; r-- > r_lo;) emit(r, d - r);
    }
  }
}

std::uint32_t enclosing_power_of_two(std::size_t n) {
  return static_cast<std::uint32_t>(std::bit_ceil(n));
}

}  // namespace

std::string to_string(CurveKind kind) {
  for (const auto& kn : kKindNames)
    if (kn.kind == kind) return std::string(kn.name);
  return "unknown";
}

CurveKind parse_curve_kind(std::string_view name) {
  for (const auto& kn : kKindNames)
    if (kn.name == name) return kn.kind;
  throw ConfigError("unknown scan curve kind '" + std::string(name) + "'");
}

std::string to_string(CurveSpec spec) {
  std::string s = to_string(spec.kind);
  if (spec.reversed) s += kReversedSuffix;
  return s;
}

CurveSpec parse_curve_spec(std::string_view name) {
  name = trim(name);
  CurveSpec spec;
  if (name.size() > kReversedSuffix.size() && name.ends_with(kReversedSuffix)) {
    spec.reversed = true;
    name.remove_suffix(kReversedSuffix.size());
  }
  spec.kind = parse_curve_kind(name);
  return spec;
}

std::pair<std::uint32_t, std::uint32_t> morton_decode(std::uint64_t code) {
  std::uint32_t row = 0, col = 0;
  for (unsigned bit = 0; bit < 32; ++bit) {
    col |= static_cast<std::uint32_t>((code >> (2 * bit)) & 1u) << bit;
    row |= static_cast<std::uint32_t>((code >> (2 * bit + 1)) & 1u) << bit;
  }
  return {row, col};
}

std::pair<std::uint32_t, std::uint32_t> hilbert_decode(std::uint32_t side, std::uint64_t d) {
  std::uint32_t x = 0, y = 0;
  std::uint64_t t = d;
  for (std::uint32_t s = 1; s < side; s *= 2) {
    const std::uint32_t rx = 1u & static_cast<std::uint32_t>(t / 2);
    const std::uint32_t ry = 1u & static_cast<std::uint32_t>(t ^ rx);
    if (ry == 0) {
      if (rx == 1) {
        x = s - 1 - x;
        y = s - 1 - y;
      }
      std::swap(x, y);
    }
    x += s * rx;
    y += s * ry;
    t /= 4;
  }
  return {x, y};
}

ScanCurve build_curve(CurveKind kind, bool reversed, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0)
    throw ConfigError("build_curve: grid extents must be positive, got " + std::to_string(height) +
                      "x" + std::to_string(width));
  const std::size_t H = height, W = width, n = H * W;
  ScanCurve c;
  c.kind = kind;
  c.reversed = reversed;
  c.height = H;
  c.width = W;
  c.order.reserve(n);
  auto emit = [&](std::size_t r, std::size_t col) { c.order.push_back(r * W + col); };

  switch (kind) {
    case CurveKind::horizontal:
      for (std::size_t i = 0; i < n; ++i) c.order.push_back(i);
      break;
    case CurveKind::vertical:
      for (std::size_t col = 0; col < W; ++col)
        for (std::size_t r = 0; r < H; ++r) emit(r, col);
      break;
    case CurveKind::diagonal:
      anti_diagonals(H, W, [](std::size_t) { return true; }, emit);
      break;
    case CurveKind::flipped_diagonal:
      anti_diagonals(H, W, [](std::size_t) { return true; },
                     [&](std::size_t r, std::size_t mc) { emit(r, W - 1 - mc); });
      break;
    case CurveKind::zigzag:
      anti_diagonals(H, W, [](std::size_t d) { return d % 2 == 1; }, emit);
      break;
    case CurveKind::zorder: {
      const std::uint64_t side = enclosing_power_of_two(std::max(H, W));
      for (std::uint64_t code = 0; code < side * side; ++code) {
        const auto [r, col] = morton_decode(code);
        if (r < H && col < W) emit(r, col);
      }
      break;
    }
    case CurveKind::hilbert: {
      const std::uint32_t side = enclosing_power_of_two(std::max(H, W));
      for (std::uint64_t d = 0; d < std::uint64_t{side} * side; ++d) {
        const auto [r, col] = hilbert_decode(side, d);
        if (r < H && col < W) emit(r, col);
      }
      break;
    }
  }
  if (reversed) std::reverse(c.order.begin(), c.order.end());
  c.inverse.assign(n, 0);
  for (std::size_t t = 0; t < n; ++t) c.inverse[c.order[t]] = t;
  return c;
}

LocalityProfile locality_profile(const ScanCurve& curve) {
  LocalityProfile p;
  const std::size_t H = curve.height, W = curve.width;
  std::size_t sum_h = 0, cnt_h = 0, sum_v = 0, cnt_v = 0, adjacent = 0;
  auto dist = [&](std::size_t a, std::size_t b) {
    const std::size_t ta = curve.inverse[a], tb = curve.inverse[b];
    const std::size_t d = ta > tb ? ta - tb : tb - ta;
    adjacent += d == 1;
    return d;
  };
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      const std::size_t cell = r * W + c;
      if (c + 1 < W) {
        const std::size_t d = dist(cell, cell + 1);
        sum_h += d;
        ++cnt_h;
        p.max_1d_distance = std::max(p.max_1d_distance, d);
      }
      if (r + 1 < H) {
        const std::size_t d = dist(cell, cell + W);
        sum_v += d;
        ++cnt_v;
        p.max_1d_distance = std::max(p.max_1d_distance, d);
      }
    }
  }
  p.pair_count = cnt_h + cnt_v;
  if (p.pair_count)
    p.mean_1d_distance = static_cast<double>(sum_h + sum_v) / static_cast<double>(p.pair_count);
  if (p.pair_count) p.adjacent_fraction = static_cast<double>(adjacent) / static_cast<double>(p.pair_count);
  if (cnt_h) p.mean_horizontal_pair = static_cast<double>(sum_h) / static_cast<double>(cnt_h);
  if (cnt_v) p.mean_vertical_pair = static_cast<double>(sum_v) / static_cast<double>(cnt_v);
  return p;
}

template <typename T>
Var<T> apply_curve(Var<T> x, const ScanCurve& curve) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] != curve.height || s[1] != curve.width)
    throw DimensionError("apply_curve: tensor " + shape_str(s) + " does not match curve extents " +
                         std::to_string(curve.height) + "x" + std::to_string(curve.width));
  return gather_rows(x, std::span<const std::size_t>(curve.order));
}

template <typename T>
Var<T> invert_curve(Var<T> seq, const ScanCurve& curve) {
  const Shape& s = seq.shape();
  if (s.size() != 2 || s[0] != curve.length())
    throw DimensionError("invert_curve: sequence " + shape_str(s) + " does not match curve length " +
                         std::to_string(curve.length()));
  return scatter_rows(seq, std::span<const std::size_t>(curve.order),
                      Shape{curve.height, curve.width, s[1]});
}

std::vector<CurveSpec> scan_set(std::string_view name) {
  using K = CurveKind;
  name = trim(name);
  if (name == "2d")
    return {{K::horizontal, false}, {K::vertical, false}, {K::horizontal, true}, {K::vertical, true}};
  if (name == "diagonal")
    return {{K::diagonal, false},
            {K::flipped_diagonal, false},
            {K::diagonal, true},
            {K::flipped_diagonal, true}};
  if (name == "zigzag") return {{K::zigzag, false}, {K::zigzag, true}};
  if (name == "zorder") return {{K::zorder, false}, {K::zorder, true}};
  if (name == "hilbert") return {{K::hilbert, false}, {K::hilbert, true}};
  if (name == "all_around") {
    auto set = scan_set("2d");
    auto diag = scan_set("diagonal");
    set.insert(set.end(), diag.begin(), diag.end());
    return set;
  }
  std::vector<CurveSpec> specs;
  std::size_t start = 0;
  while (start <= name.size()) {
    const std::size_t comma = name.find(',', start);
    const std::string_view item =
        name.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (trim(item).empty()) throw ConfigError("empty entry in scan set '" + std::string(name) + "'");
    specs.push_back(parse_curve_spec(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return specs;
}

std::shared_ptr<const ScanCurve> CurveCache::get(CurveSpec spec, std::size_t height,
                                                 std::size_t width) {
  auto key = std::make_tuple(spec, height, width);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  auto curve = std::make_shared<const ScanCurve>(build_curve(spec, height, width));
  cache_.emplace(key, curve);
  return curve;
}

template Var<float> apply_curve(Var<float>, const ScanCurve&);
template Var<double> apply_curve(Var<double>, const ScanCurve&);
template Var<float> invert_curve(Var<float>, const ScanCurve&);
template Var<double> invert_curve(Var<double>, const ScanCurve&);

}  // namespace eamamba
