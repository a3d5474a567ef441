#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "eamamba/graph.hpp"

namespace eamamba {

enum class EwiseKind { add, mul };

// y[..., j] = sum_i x[..., i] * w[i, j] (+ b[j])
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b = std::nullopt);

// Depth-wise KxK convolution over x[H, W, C] with kernel k[K, K, C], stride 1,
// zero same-padding. K must be odd.
template <typename T>
Var<T> dwconv2d(Var<T> x, Var<T> k, std::optional<Var<T>> b = std::nullopt);

// Dense KxK convolution x[H, W, Cin] * k[K, K, Cin, Cout], zero same-padding.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> k, std::optional<Var<T>> b = std::nullopt);

// Normalizes over the last axis at each position. eps must be positive.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5));

template <typename T>
Var<T> silu(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);

template <typename T>
Var<T> ewise(Var<T> a, Var<T> b, EwiseKind kind);
template <typename T>
Var<T> add(Var<T> a, Var<T> b) { return ewise(a, b, EwiseKind::add); }
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) { return ewise(a, b, EwiseKind::mul); }

template <typename T>
Var<T> scale(Var<T> x, T factor);

// Scalar reductions, returned with shape [1].
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);
template <typename T>
Var<T> l1_loss(Var<T> prediction, Var<T> target);
// Sum over channels of x[H, W, C] at pixel (row, col).
template <typename T>
Var<T> pixel_sum(Var<T> x, std::size_t row, std::size_t col);

// Channel (last-axis) slicing and concatenation.
template <typename T>
Var<T> slice_channels(Var<T> x, std::size_t begin, std::size_t count);
template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);

// Row gather/scatter over the flattened leading axes of x. gather produces
// [index.size(), C]; scatter writes row t of seq to row index[t] of a zero
// tensor of `out_shape` (index must be injective).
template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> index);
template <typename T>
Var<T> scatter_rows(Var<T> seq, std::span<const std::size_t> index, Shape out_shape);

// 2x2 pixel (un)shuffle. Channel c of cell (dy, dx) maps to c * 4 + dy * 2 + dx.
template <typename T>
Var<T> space_to_depth(Var<T> x);
template <typename T>
Var<T> depth_to_space(Var<T> x);

// Reflection padding at the bottom/right edges up to (height, width), and the
// matching top-left crop.
template <typename T>
Var<T> reflect_pad(Var<T> x, std::size_t height, std::size_t width);
template <typename T>
Var<T> crop(Var<T> x, std::size_t height, std::size_t width);

// Mean over H and W of x[H, W, C], shape [C].
template <typename T>
Var<T> global_avg_pool(Var<T> x);
// x[H, W, C] * s[C]
template <typename T>
Var<T> scale_channels(Var<T> x, Var<T> s);

}  // namespace eamamba
