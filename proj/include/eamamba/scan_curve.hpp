#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "eamamba/graph.hpp"

namespace eamamba {

enum class CurveKind { horizontal, vertical, diagonal, flipped_diagonal, zigzag, zorder, hilbert };

inline constexpr CurveKind kAllCurveKinds[] = {
    CurveKind::horizontal, CurveKind::vertical, CurveKind::diagonal, CurveKind::flipped_diagonal,
    CurveKind::zigzag,     CurveKind::zorder,   CurveKind::hilbert};

struct CurveSpec {
  CurveKind kind = CurveKind::horizontal;
  bool reversed = false;

  bool operator==(const CurveSpec&) const = default;
  auto operator<=>(const CurveSpec&) const = default;
};

std::string to_string(CurveKind kind);
CurveKind parse_curve_kind(std::string_view name);
// "vertical", "vertical_rev", ...
std::string to_string(CurveSpec spec);
CurveSpec parse_curve_spec(std::string_view name);

// Bijective visiting order over an H x W grid. order[t] is the row-major cell
// index visited at step t; inverse[order[t]] == t.
struct ScanCurve {
  CurveKind kind = CurveKind::horizontal;
  bool reversed = false;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::size_t> order;
  std::vector<std::size_t> inverse;

  std::size_t length() const noexcept { return order.size(); }
  std::size_t row(std::size_t step) const { return order[step] / width; }
  std::size_t col(std::size_t step) const { return order[step] % width; }
};

// Trajectories:
//   horizontal        rows top-down, each left to right
//   vertical          columns left-right, each top to bottom
//   diagonal          anti-diagonals r + c ascending, r ascending within each
//   flipped_diagonal  diagonal on the horizontally mirrored grid
//   zigzag            anti-diagonals, direction alternating (JPEG order)
//   zorder            Morton order of the enclosing 2^k square, column bit low
//   hilbert           Hilbert curve of the enclosing 2^k square
// Cells outside the grid are skipped for zorder/hilbert. `reversed` visits
// the same cells in the opposite order.
ScanCurve build_curve(CurveKind kind, bool reversed, std::size_t height, std::size_t width);
inline ScanCurve build_curve(CurveSpec spec, std::size_t height, std::size_t width) {
  return build_curve(spec.kind, spec.reversed, height, width);
}

// Morton code -> (row, col) with the column in the even bits.
std::pair<std::uint32_t, std::uint32_t> morton_decode(std::uint64_t code);
// Hilbert index -> (row, col) on a side x side grid, side a power of two.
std::pair<std::uint32_t, std::uint32_t> hilbert_decode(std::uint32_t side, std::uint64_t d);

// Distances in the 1D sequence between 4-neighbour cells.
struct LocalityProfile {
  double mean_1d_distance = 0.0;
  std::size_t max_1d_distance = 0;
  std::size_t pair_count = 0;
  double mean_horizontal_pair = 0.0;
  double mean_vertical_pair = 0.0;
  // Share of neighbour pairs that stay consecutive in the sequence.
  double adjacent_fraction = 0.0;
};

LocalityProfile locality_profile(const ScanCurve& curve);

// x[H, W, C] -> seq[H*W, C] in curve order, and its exact inverse.
template <typename T>
Var<T> apply_curve(Var<T> x, const ScanCurve& curve);
template <typename T>
Var<T> invert_curve(Var<T> seq, const ScanCurve& curve);

// Named strategy sets:
//   2d          horizontal, vertical and their reversals (4)
//   diagonal    diagonal, flipped_diagonal and their reversals (4)
//   zigzag, zorder, hilbert   the curve and its reversal (2)
//   all_around  2d followed by diagonal (8)
// Anything else is parsed as a comma-separated list of curve names.
std::vector<CurveSpec> scan_set(std::string_view name);

// Builds curves on first use for a given extent and hands out shared,
// immutable instances afterwards.
class CurveCache {
 public:
  std::shared_ptr<const ScanCurve> get(CurveSpec spec, std::size_t height, std::size_t width);

 private:
  std::map<std::tuple<CurveSpec, std::size_t, std::size_t>, std::shared_ptr<const ScanCurve>> cache_;
};

}  // namespace eamamba
