#include "eamamba/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "eamamba/errors.hpp"

namespace eamamba {

namespace {

template <typename T>
T sigmoid_scalar(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank)
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(s));
}

std::size_t rows_of(const Shape& s) {
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data().data();
  const T* s = src.data().data();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// linear

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  require_rank(wv.shape(), 2, "linear weight");
  const std::size_t cin = wv.extent(0), cout = wv.extent(1);
  if (xv.shape().empty() || xv.shape().back() != cin)
    throw DimensionError("linear: input " + shape_str(xv.shape()) + " incompatible with weight " +
                         shape_str(wv.shape()));
  if (b) {
    require_rank(b->shape(), 1, "linear bias");
    if (b->value().extent(0) != cout) throw DimensionError("linear: bias extent mismatch");
  }
  const std::size_t rows = xv.rows();
  Shape out_shape = xv.shape();
  out_shape.back() = cout;
  Tensor<T> y(out_shape);
  {
    const T* xp = xv.data().data();
    const T* wp = wv.data().data();
    const T* bp = b ? b->value().data().data() : nullptr;
    T* yp = y.data().data();
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
      T* yr = yp + r * cout;
      if (bp) std::copy(bp, bp + cout, yr);
      const T* xr = xp + r * cin;
      for (std::size_t i = 0; i < cin; ++i) {
        const T xi = xr[i];
        const T* wr = wp + i * cout;
        for (std::size_t j = 0; j < cout; ++j) yr[j] += xi * wr[j];
      }
    }
  }

  const std::size_t xid = x.id(), wid = w.id();
  const std::optional<std::size_t> bid = b ? std::optional(b->id()) : std::nullopt;
  std::vector<Var<T>> inputs{x, w};
  if (b) inputs.push_back(*b);
  auto backward = [xid, wid, bid, rows, cin, cout](Graph<T>& g, const Tensor<T>& dy) {
    const T* dyp = dy.data().data();
    if (Tensor<T>* dx = g.grad_sink(xid)) {
      const T* wp = g.value(wid).data().data();
      std::vector<T> wt(cin * cout);
      for (std::size_t i = 0; i < cin; ++i)
        for (std::size_t j = 0; j < cout; ++j) wt[j * cin + i] = wp[i * cout + j];
      T* dxp = dx->data().data();
#pragma omp parallel for schedule(static)
      for (std::size_t r = 0; r < rows; ++r) {
        T* dxr = dxp + r * cin;
        const T* dyr = dyp + r * cout;
        for (std::size_t j = 0; j < cout; ++j) {
          const T d = dyr[j];
          const T* wtr = wt.data() + j * cin;
          for (std::size_t i = 0; i < cin; ++i) dxr[i] += d * wtr[i];
        }
      }
    }
    if (Tensor<T>* dw = g.grad_sink(wid)) {
      const T* xp = g.value(xid).data().data();
      T* dwp = dw->data().data();
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < cin; ++i) {
        T* dwr = dwp + i * cout;
        for (std::size_t r = 0; r < rows; ++r) {
          const T xi = xp[r * cin + i];
          const T* dyr = dyp + r * cout;
          for (std::size_t j = 0; j < cout; ++j) dwr[j] += xi * dyr[j];
        }
      }
    }
    if (bid) {
      if (Tensor<T>* db = g.grad_sink(*bid)) {
        T* dbp = db->data().data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < cout; ++j) dbp[j] += dyp[r * cout + j];
      }
    }
  };
  return g.record("linear", std::move(y), inputs, backward,
                  static_cast<std::uint64_t>(rows) * cin * cout);
}

// ---------------------------------------------------------------------------
// dwconv2d

template <typename T>
Var<T> dwconv2d(Var<T> x, Var<T> k, std::optional<Var<T>> b) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  const Tensor<T>& kv = k.value();
  require_rank(xv.shape(), 3, "dwconv2d input");
  require_rank(kv.shape(), 3, "dwconv2d kernel");
  const std::size_t H = xv.extent(0), W = xv.extent(1), C = xv.extent(2);
  const std::size_t K = kv.extent(0);
  if (K % 2 == 0) throw ConfigError("dwconv2d: kernel size must be odd, got " + std::to_string(K));
  if (kv.extent(1) != K || kv.extent(2) != C)
    throw DimensionError("dwconv2d: kernel " + shape_str(kv.shape()) + " incompatible with input " +
                         shape_str(xv.shape()));
  if (b && (b->value().rank() != 1 || b->value().extent(0) != C))
    throw DimensionError("dwconv2d: bias extent mismatch");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);
  const auto Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);

  Tensor<T> y(xv.shape());
  {
    const T* xp = xv.data().data();
    const T* kp = kv.data().data();
    const T* bp = b ? b->value().data().data() : nullptr;
    T* yp = y.data().data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t h = 0; h < Hs; ++h) {
      for (std::ptrdiff_t w = 0; w < Ws; ++w) {
        T* yc = yp + (h * Ws + w) * C;
        if (bp) std::copy(bp, bp + C, yc);
        for (std::size_t ky = 0; ky < K; ++ky) {
          const std::ptrdiff_t ih = h + static_cast<std::ptrdiff_t>(ky) - pad;
          if (ih < 0 || ih >= Hs) continue;
          for (std::size_t kx = 0; kx < K; ++kx) {
            const std::ptrdiff_t iw = w + static_cast<std::ptrdiff_t>(kx) - pad;
            if (iw < 0 || iw >= Ws) continue;
            const T* xc = xp + (ih * Ws + iw) * C;
            const T* kc = kp + (ky * K + kx) * C;
            for (std::size_t c = 0; c < C; ++c) yc[c] += xc[c] * kc[c];
          }
        }
      }
    }
  }

  const std::size_t xid = x.id(), kid = k.id();
  const std::optional<std::size_t> bid = b ? std::optional(b->id()) : std::nullopt;
  std::vector<Var<T>> inputs{x, k};
  if (b) inputs.push_back(*b);
  auto backward = [=](Graph<T>& g, const Tensor<T>& dy) {
    const T* dyp = dy.data().data();
    if (Tensor<T>* dx = g.grad_sink(xid)) {
      const T* kp = g.value(kid).data().data();
      T* dxp = dx->data().data();
      // dx[ih, iw] gathers dy[ih - ky + pad, iw - kx + pad] * k[ky, kx].
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t ih = 0; ih < Hs; ++ih) {
        for (std::ptrdiff_t iw = 0; iw < Ws; ++iw) {
          T* dxc = dxp + (ih * Ws + iw) * C;
          for (std::size_t ky = 0; ky < K; ++ky) {
            const std::ptrdiff_t h = ih - static_cast<std::ptrdiff_t>(ky) + pad;
            if (h < 0 || h >= Hs) continue;
            for (std::size_t kx = 0; kx < K; ++kx) {
              const std::ptrdiff_t w = iw - static_cast<std::ptrdiff_t>(kx) + pad;
              if (w < 0 || w >= Ws) continue;
              const T* dyc = dyp + (h * Ws + w) * C;
              const T* kc = kp + (ky * K + kx) * C;
              for (std::size_t c = 0; c < C; ++c) dxc[c] += dyc[c] * kc[c];
            }
          }
        }
      }
    }
    if (Tensor<T>* dk = g.grad_sink(kid)) {
      const T* xp = g.value(xid).data().data();
      T* dkp = dk->data().data();
#pragma omp parallel for schedule(static)
      for (std::size_t tap = 0; tap < K * K; ++tap) {
        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(tap / K) - pad;
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(tap % K) - pad;
        T* dkc = dkp + tap * C;
        for (std::ptrdiff_t h = 0; h < Hs; ++h) {
          const std::ptrdiff_t ih = h + oy;
          if (ih < 0 || ih >= Hs) continue;
          for (std::ptrdiff_t w = 0; w < Ws; ++w) {
            const std::ptrdiff_t iw = w + ox;
            if (iw < 0 || iw >= Ws) continue;
            const T* dyc = dyp + (h * Ws + w) * C;
            const T* xc = xp + (ih * Ws + iw) * C;
            for (std::size_t c = 0; c < C; ++c) dkc[c] += dyc[c] * xc[c];
          }
        }
      }
    }
    if (bid) {
      if (Tensor<T>* db = g.grad_sink(*bid)) {
        T* dbp = db->data().data();
        for (std::size_t p = 0; p < H * W; ++p)
          for (std::size_t c = 0; c < C; ++c) dbp[c] += dyp[p * C + c];
      }
    }
  };
  return g.record("dwconv2d", std::move(y), inputs, backward,
                  static_cast<std::uint64_t>(H) * W * C * K * K);
}

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> k, std::optional<Var<T>> b) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  const Tensor<T>& kv = k.value();
  require_rank(xv.shape(), 3, "conv2d input");
  require_rank(kv.shape(), 4, "conv2d kernel");
  const std::size_t H = xv.extent(0), W = xv.extent(1), Ci = xv.extent(2);
  const std::size_t K = kv.extent(0), Co = kv.extent(3);
  if (K % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(K));
  if (kv.extent(1) != K || kv.extent(2) != Ci)
    throw DimensionError("conv2d: kernel " + shape_str(kv.shape()) + " incompatible with input " +
                         shape_str(xv.shape()));
  if (b && (b->value().rank() != 1 || b->value().extent(0) != Co))
    throw DimensionError("conv2d: bias extent mismatch");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);
  const auto Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);

  Tensor<T> y({H, W, Co});
  {
    const T* xp = xv.data().data();
    const T* kp = kv.data().data();
    const T* bp = b ? b->value().data().data() : nullptr;
    T* yp = y.data().data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t h = 0; h < Hs; ++h) {
      for (std::ptrdiff_t w = 0; w < Ws; ++w) {
        T* yc = yp + (h * Ws + w) * Co;
        if (bp) std::copy(bp, bp + Co, yc);
        for (std::size_t ky = 0; ky < K; ++ky) {
          const std::ptrdiff_t ih = h + static_cast<std::ptrdiff_t>(ky) - pad;
          if (ih < 0 || ih >= Hs) continue;
          for (std::size_t kx = 0; kx < K; ++kx) {
            const std::ptrdiff_t iw = w + static_cast<std::ptrdiff_t>(kx) - pad;
            if (iw < 0 || iw >= Ws) continue;
            const T* xc = xp + (ih * Ws + iw) * Ci;
            const T* kt = kp + (ky * K + kx) * Ci * Co;
            for (std::size_t i = 0; i < Ci; ++i) {
              const T xi = xc[i];
              const T* kr = kt + i * Co;
              for (std::size_t o = 0; o < Co; ++o) yc[o] += xi * kr[o];
            }
          }
        }
      }
    }
  }

  const std::size_t xid = x.id(), kid = k.id();
  const std::optional<std::size_t> bid = b ? std::optional(b->id()) : std::nullopt;
  std::vector<Var<T>> inputs{x, k};
  if (b) inputs.push_back(*b);
  auto backward = [=](Graph<T>& g, const Tensor<T>& dy) {
    const T* dyp = dy.data().data();
    if (Tensor<T>* dx = g.grad_sink(xid)) {
      const T* kp = g.value(kid).data().data();
      T* dxp = dx->data().data();
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t ih = 0; ih < Hs; ++ih) {
        for (std::ptrdiff_t iw = 0; iw < Ws; ++iw) {
          T* dxc = dxp + (ih * Ws + iw) * Ci;
          for (std::size_t ky = 0; ky < K; ++ky) {
            const std::ptrdiff_t h = ih - static_cast<std::ptrdiff_t>(ky) + pad;
            if (h < 0 || h >= Hs) continue;
            for (std::size_t kx = 0; kx < K; ++kx) {
              const std::ptrdiff_t w = iw - static_cast<std::ptrdiff_t>(kx) + pad;
              if (w < 0 || w >= Ws) continue;
              const T* dyc = dyp + (h * Ws + w) * Co;
              const T* kt = kp + (ky * K + kx) * Ci * Co;
              for (std::size_t i = 0; i < Ci; ++i) {
                const T* kr = kt + i * Co;
                T acc = T(0);
                for (std::size_t o = 0; o < Co; ++o) acc += dyc[o] * kr[o];
                dxc[i] += acc;
              }
            }
          }
        }
      }
    }
    if (Tensor<T>* dk = g.grad_sink(kid)) {
      const T* xp = g.value(xid).data().data();
      T* dkp = dk->data().data();
#pragma omp parallel for schedule(static)
      for (std::size_t tap = 0; tap < K * K; ++tap) {
        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(tap / K) - pad;
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(tap % K) - pad;
        T* dkt = dkp + tap * Ci * Co;
        for (std::ptrdiff_t h = 0; h < Hs; ++h) {
          const std::ptrdiff_t ih = h + oy;
          if (ih < 0 || ih >= Hs) continue;
          for (std::ptrdiff_t w = 0; w < Ws; ++w) {
            const std::ptrdiff_t iw = w + ox;
            if (iw < 0 || iw >= Ws) continue;
            const T* dyc = dyp + (h * Ws + w) * Co;
            const T* xc = xp + (ih * Ws + iw) * Ci;
            for (std::size_t i = 0; i < Ci; ++i) {
              const T xi = xc[i];
              T* dkr = dkt + i * Co;
              for (std::size_t o = 0; o < Co; ++o) dkr[o] += xi * dyc[o];
            }
          }
        }
      }
    }
    if (bid) {
      if (Tensor<T>* db = g.grad_sink(*bid)) {
        T* dbp = db->data().data();
        for (std::size_t p = 0; p < H * W; ++p)
          for (std::size_t o = 0; o < Co; ++o) dbp[o] += dyp[p * Co + o];
      }
    }
  };
  return g.record("conv2d", std::move(y), inputs, backward,
                  static_cast<std::uint64_t>(H) * W * Ci * Co * K * K);
}

// ---------------------------------------------------------------------------
// layer_norm

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  if (!(eps > T(0))) throw ConfigError("layer_norm: eps must be positive");
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  const std::size_t C = xv.channels();
  const std::size_t rows = xv.rows();
  if (gamma.value().shape() != Shape{C} || beta.value().shape() != Shape{C})
    throw DimensionError("layer_norm: affine parameters must have shape [" + std::to_string(C) + "]");

  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  Tensor<T> y(xv.shape());
  {
    const T* xp = xv.data().data();
    const T* gp = gamma.value().data().data();
    const T* bp = beta.value().data().data();
    T* yp = y.data().data();
    T* hp = xhat->data();
    T* rp = rstd->data();
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = xp + r * C;
      T mu = T(0);
      for (std::size_t c = 0; c < C; ++c) mu += xr[c];
      mu /= static_cast<T>(C);
      T var = T(0);
      for (std::size_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
      var /= static_cast<T>(C);
      const T inv = T(1) / std::sqrt(var + eps);
      rp[r] = inv;
      for (std::size_t c = 0; c < C; ++c) {
        const T h = (xr[c] - mu) * inv;
        hp[r * C + c] = h;
        yp[r * C + c] = gp[c] * h + bp[c];
      }
    }
  }

  const std::size_t xid = x.id(), gid = gamma.id(), bid = beta.id();
  auto backward = [=](Graph<T>& g, const Tensor<T>& dy) {
    const T* dyp = dy.data().data();
    const T* hp = xhat->data();
    if (Tensor<T>* dg = g.grad_sink(gid)) {
      T* p = dg->data().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < C; ++c) p[c] += dyp[r * C + c] * hp[r * C + c];
    }
    if (Tensor<T>* db = g.grad_sink(bid)) {
      T* p = db->data().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < C; ++c) p[c] += dyp[r * C + c];
    }
    if (Tensor<T>* dx = g.grad_sink(xid)) {
      const T* gp = g.value(gid).data().data();
      T* dxp = dx->data().data();
      const T* rp = rstd->data();
      const T invc = T(1) / static_cast<T>(C);
#pragma omp parallel for schedule(static)
      for (std::size_t r = 0; r < rows; ++r) {
        T m1 = T(0), m2 = T(0);
        for (std::size_t c = 0; c < C; ++c) {
          const T dh = dyp[r * C + c] * gp[c];
          m1 += dh;
          m2 += dh * hp[r * C + c];
        }
        m1 *= invc;
        m2 *= invc;
        for (std::size_t c = 0; c < C; ++c) {
          const T dh = dyp[r * C + c] * gp[c];
          dxp[r * C + c] += rp[r] * (dh - m1 - hp[r * C + c] * m2);
        }
      }
    }
  };
  return g.record("layer_norm", std::move(y), {x, gamma, beta}, backward);
}

// ---------------------------------------------------------------------------
// activations and elementwise

template <typename T>
Var<T> silu(Var<T> x) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  const std::size_t n = xv.size();
  for (std::size_t i = 0; i < n; ++i) y[i] = xv[i] * sigmoid_scalar(xv[i]);
  const std::size_t xid = x.id();
  auto backward = [xid, n](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid)) {
      const Tensor<T>& xv = g.value(xid);
      for (std::size_t i = 0; i < n; ++i) {
        const T s = sigmoid_scalar(xv[i]);
        (*dx)[i] += dy[i] * s * (T(1) + xv[i] * (T(1) - s));
      }
    }
  };
  return g.record("silu", std::move(y), {x}, backward);
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  const std::size_t n = xv.size();
  for (std::size_t i = 0; i < n; ++i) y[i] = sigmoid_scalar(xv[i]);
  const std::size_t xid = x.id();
  auto backward = [xid, n](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid)) {
      const Tensor<T>& xv = g.value(xid);
      for (std::size_t i = 0; i < n; ++i) {
        const T s = sigmoid_scalar(xv[i]);
        (*dx)[i] += dy[i] * s * (T(1) - s);
      }
    }
  };
  return g.record("sigmoid", std::move(y), {x}, backward);
}

template <typename T>
Var<T> ewise(Var<T> a, Var<T> b, EwiseKind kind) {
  Graph<T>& g = a.graph();
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_same_shape(av.shape(), bv.shape(), kind == EwiseKind::add ? "add" : "mul");
  const std::size_t n = av.size();
  Tensor<T> y(av.shape());
  if (kind == EwiseKind::add)
    for (std::size_t i = 0; i < n; ++i) y[i] = av[i] + bv[i];
  else
    for (std::size_t i = 0; i < n; ++i) y[i] = av[i] * bv[i];
  const std::size_t aid = a.id(), bid = b.id();
  auto backward = [aid, bid, n, kind](Graph<T>& g, const Tensor<T>& dy) {
    if (kind == EwiseKind::add) {
      if (Tensor<T>* da = g.grad_sink(aid)) accumulate(*da, dy);
      if (Tensor<T>* db = g.grad_sink(bid)) accumulate(*db, dy);
      return;
    }
    if (Tensor<T>* da = g.grad_sink(aid)) {
      const Tensor<T>& bv = g.value(bid);
      for (std::size_t i = 0; i < n; ++i) (*da)[i] += dy[i] * bv[i];
    }
    if (Tensor<T>* db = g.grad_sink(bid)) {
      const Tensor<T>& av = g.value(aid);
      for (std::size_t i = 0; i < n; ++i) (*db)[i] += dy[i] * av[i];
    }
  };
  return g.record(kind == EwiseKind::add ? "add" : "mul", std::move(y), {a, b}, backward);
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] * factor;
  const std::size_t xid = x.id();
  auto backward = [xid, factor](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid))
      for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i] * factor;
  };
  return g.record("scale", std::move(y), {x}, backward);
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Var<T> sum(Var<T> x) {
  Graph<T>& g = x.graph();
  T s = T(0);
  for (T v : x.value().data()) s += v;
  const std::size_t xid = x.id();
  auto backward = [xid](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid))
      for (T& v : dx->data()) v += dy[0];
  };
  return g.record("sum", Tensor<T>({1}, s), {x}, backward);
}

template <typename T>
Var<T> mean(Var<T> x) {
  const T n = static_cast<T>(x.value().size());
  return scale(sum(x), T(1) / n);
}

template <typename T>
Var<T> l1_loss(Var<T> prediction, Var<T> target) {
  Graph<T>& g = prediction.graph();
  const Tensor<T>& pv = prediction.value();
  const Tensor<T>& tv = target.value();
  require_same_shape(pv.shape(), tv.shape(), "l1_loss");
  const std::size_t n = pv.size();
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += std::abs(pv[i] - tv[i]);
  s /= static_cast<T>(n);
  const std::size_t pid = prediction.id(), tid = target.id();
  auto backward = [pid, tid, n](Graph<T>& g, const Tensor<T>& dy) {
    const Tensor<T>& pv = g.value(pid);
    const Tensor<T>& tv = g.value(tid);
    const T w = dy[0] / static_cast<T>(n);
    auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
    if (Tensor<T>* dp = g.grad_sink(pid))
      for (std::size_t i = 0; i < n; ++i) (*dp)[i] += w * sign(pv[i] - tv[i]);
    if (Tensor<T>* dt = g.grad_sink(tid))
      for (std::size_t i = 0; i < n; ++i) (*dt)[i] -= w * sign(pv[i] - tv[i]);
  };
  return g.record("l1_loss", Tensor<T>({1}, s), {prediction, target}, backward);
}

template <typename T>
Var<T> pixel_sum(Var<T> x, std::size_t row, std::size_t col) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  require_rank(xv.shape(), 3, "pixel_sum");
  const std::size_t W = xv.extent(1), C = xv.extent(2);
  if (row >= xv.extent(0) || col >= W) throw DimensionError("pixel_sum: target outside tensor");
  const std::size_t base = (row * W + col) * C;
  T s = T(0);
  for (std::size_t c = 0; c < C; ++c) s += xv[base + c];
  const std::size_t xid = x.id();
  auto backward = [xid, base, C](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid))
      for (std::size_t c = 0; c < C; ++c) (*dx)[base + c] += dy[0];
  };
  return g.record("pixel_sum", Tensor<T>({1}, s), {x}, backward);
}

// ---------------------------------------------------------------------------
// channel slicing / concatenation

template <typename T>
Var<T> slice_channels(Var<T> x, std::size_t begin, std::size_t count) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  const std::size_t C = xv.channels();
  if (count == 0 || begin + count > C)
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + std::to_string(C) +
                         " channels");
  const std::size_t rows = xv.rows();
  Shape out_shape = xv.shape();
  out_shape.back() = count;
  Tensor<T> y(out_shape);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.data().data() + r * C + begin, count, y.data().data() + r * count);
  const std::size_t xid = x.id();
  auto backward = [=](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid)) {
      T* dxp = dx->data().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) dxp[r * C + begin + c] += dy[r * count + c];
    }
  };
  return g.record("slice_channels", std::move(y), {x}, backward);
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_channels: no inputs");
  Graph<T>& g = parts.front().graph();
  const Shape& first = parts.front().shape();
  const std::size_t rows = rows_of(first);
  std::vector<std::size_t> offsets, widths, ids;
  std::size_t total = 0;
  for (const Var<T>& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin()))
      throw DimensionError("concat_channels: leading extents differ: " + shape_str(s) + " vs " +
                           shape_str(first));
    offsets.push_back(total);
    widths.push_back(s.back());
    ids.push_back(p.id());
    total += s.back();
  }
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor<T> y(out_shape);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* src = parts[k].value().data().data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(src + r * widths[k], widths[k], y.data().data() + r * total + offsets[k]);
  }
  auto backward = [=](Graph<T>& g, const Tensor<T>& dy) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor<T>* d = g.grad_sink(ids[k]);
      if (!d) continue;
      T* dp = d->data().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < widths[k]; ++c)
          dp[r * widths[k] + c] += dy[r * total + offsets[k] + c];
    }
  };
  return g.record("concat_channels", std::move(y), parts, backward);
}

// ---------------------------------------------------------------------------
// row gather / scatter

template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> index) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  const std::size_t C = xv.channels(), rows = xv.rows();
  for (std::size_t i : index)
    if (i >= rows) throw DimensionError("gather_rows: index out of range");
  Tensor<T> y({index.size(), C});
  for (std::size_t t = 0; t < index.size(); ++t)
    std::copy_n(xv.data().data() + index[t] * C, C, y.data().data() + t * C);
  const std::size_t xid = x.id();
  auto backward = [xid, C, idx = std::vector<std::size_t>(index.begin(), index.end())](
                      Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid)) {
      T* dxp = dx->data().data();
      for (std::size_t t = 0; t < idx.size(); ++t)
        for (std::size_t c = 0; c < C; ++c) dxp[idx[t] * C + c] += dy[t * C + c];
    }
  };
  return g.record("gather_rows", std::move(y), {x}, backward);
}

template <typename T>
Var<T> scatter_rows(Var<T> seq, std::span<const std::size_t> index, Shape out_shape) {
  Graph<T>& g = seq.graph();
  const Tensor<T>& sv = seq.value();
  const std::size_t C = sv.channels();
  if (sv.rows() != index.size())
    throw DimensionError("scatter_rows: sequence length " + std::to_string(sv.rows()) +
                         " does not match index length " + std::to_string(index.size()));
  if (out_shape.empty() || out_shape.back() != C)
    throw DimensionError("scatter_rows: channel extent mismatch");
  Tensor<T> y(out_shape);
  const std::size_t rows = y.rows();
  for (std::size_t t = 0; t < index.size(); ++t) {
    if (index[t] >= rows) throw DimensionError("scatter_rows: index out of range");
    std::copy_n(sv.data().data() + t * C, C, y.data().data() + index[t] * C);
  }
  const std::size_t sid = seq.id();
  auto backward = [sid, C, idx = std::vector<std::size_t>(index.begin(), index.end())](
                      Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* ds = g.grad_sink(sid)) {
      T* dsp = ds->data().data();
      for (std::size_t t = 0; t < idx.size(); ++t)
        for (std::size_t c = 0; c < C; ++c) dsp[t * C + c] += dy[idx[t] * C + c];
    }
  };
  return g.record("scatter_rows", std::move(y), {seq}, backward);
}

// ---------------------------------------------------------------------------
// pixel (un)shuffle

template <typename T>
Var<T> space_to_depth(Var<T> x) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  require_rank(xv.shape(), 3, "space_to_depth");
  const std::size_t H = xv.extent(0), W = xv.extent(1), C = xv.extent(2);
  if (H % 2 || W % 2)
    throw DimensionError("space_to_depth: extents must be even, got " + shape_str(xv.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2, Co = 4 * C;
  auto src_index = [=](std::size_t h, std::size_t w, std::size_t oc) {
    const std::size_t c = oc / 4, dy = (oc % 4) / 2, dx = oc % 2;
    return ((2 * h + dy) * W + (2 * w + dx)) * C + c;
  };
  Tensor<T> y({Ho, Wo, Co});
  for (std::size_t h = 0; h < Ho; ++h)
    for (std::size_t w = 0; w < Wo; ++w)
      for (std::size_t oc = 0; oc < Co; ++oc) y[(h * Wo + w) * Co + oc] = xv[src_index(h, w, oc)];
  const std::size_t xid = x.id();
  auto backward = [=](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid))
      for (std::size_t h = 0; h < Ho; ++h)
        for (std::size_t w = 0; w < Wo; ++w)
          for (std::size_t oc = 0; oc < Co; ++oc)
            (*dx)[src_index(h, w, oc)] += dy[(h * Wo + w) * Co + oc];
  };
  return g.record("space_to_depth", std::move(y), {x}, backward);
}

template <typename T>
Var<T> depth_to_space(Var<T> x) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  require_rank(xv.shape(), 3, "depth_to_space");
  const std::size_t H = xv.extent(0), W = xv.extent(1), C = xv.extent(2);
  if (C % 4)
    throw DimensionError("depth_to_space: channels must be divisible by 4, got " +
                         std::to_string(C));
  const std::size_t Ho = 2 * H, Wo = 2 * W, Co = C / 4;
  auto src_index = [=](std::size_t oh, std::size_t ow, std::size_t c) {
    const std::size_t dy = oh % 2, dx = ow % 2;
    return ((oh / 2) * W + ow / 2) * C + c * 4 + dy * 2 + dx;
  };
  Tensor<T> y({Ho, Wo, Co});
  for (std::size_t h = 0; h < Ho; ++h)
    for (std::size_t w = 0; w < Wo; ++w)
      for (std::size_t c = 0; c < Co; ++c) y[(h * Wo + w) * Co + c] = xv[src_index(h, w, c)];
  const std::size_t xid = x.id();
  auto backward = [=](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid))
      for (std::size_t h = 0; h < Ho; ++h)
        for (std::size_t w = 0; w < Wo; ++w)
          for (std::size_t c = 0; c < Co; ++c)
            (*dx)[src_index(h, w, c)] += dy[(h * Wo + w) * Co + c];
  };
  return g.record("depth_to_space", std::move(y), {x}, backward);
}

// ---------------------------------------------------------------------------
// padding / cropping

template <typename T>
Var<T> reflect_pad(Var<T> x, std::size_t height, std::size_t width) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  require_rank(xv.shape(), 3, "reflect_pad");
  const std::size_t H = xv.extent(0), W = xv.extent(1), C = xv.extent(2);
  if (height < H || width < W) throw DimensionError("reflect_pad: target smaller than input");
  if ((height > H && height - H >= H) || (width > W && width - W >= W))
    throw DimensionError("reflect_pad: padding must be smaller than the input extent");
  auto reflect = [](std::size_t i, std::size_t n) { return i < n ? i : 2 * n - 2 - i; };
  Tensor<T> y({height, width, C});
  for (std::size_t h = 0; h < height; ++h)
    for (std::size_t w = 0; w < width; ++w)
      std::copy_n(xv.data().data() + (reflect(h, H) * W + reflect(w, W)) * C, C,
                  y.data().data() + (h * width + w) * C);
  const std::size_t xid = x.id();
  auto backward = [=](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid))
      for (std::size_t h = 0; h < height; ++h)
        for (std::size_t w = 0; w < width; ++w)
          for (std::size_t c = 0; c < C; ++c)
            (*dx)[(reflect(h, H) * W + reflect(w, W)) * C + c] += dy[(h * width + w) * C + c];
  };
  return g.record("reflect_pad", std::move(y), {x}, backward);
}

template <typename T>
Var<T> crop(Var<T> x, std::size_t height, std::size_t width) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  require_rank(xv.shape(), 3, "crop");
  const std::size_t H = xv.extent(0), W = xv.extent(1), C = xv.extent(2);
  if (height == 0 || width == 0 || height > H || width > W)
    throw DimensionError("crop: target outside input");
  Tensor<T> y({height, width, C});
  for (std::size_t h = 0; h < height; ++h)
    std::copy_n(xv.data().data() + h * W * C, width * C, y.data().data() + h * width * C);
  const std::size_t xid = x.id();
  auto backward = [=](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid))
      for (std::size_t h = 0; h < height; ++h)
        for (std::size_t i = 0; i < width * C; ++i) (*dx)[h * W * C + i] += dy[h * width * C + i];
  };
  return g.record("crop", std::move(y), {x}, backward);
}

// ---------------------------------------------------------------------------
// channel attention helpers

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  require_rank(xv.shape(), 3, "global_avg_pool");
  const std::size_t P = xv.rows(), C = xv.channels();
  Tensor<T> y({C});
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t c = 0; c < C; ++c) y[c] += xv[p * C + c];
  for (std::size_t c = 0; c < C; ++c) y[c] /= static_cast<T>(P);
  const std::size_t xid = x.id();
  auto backward = [=](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid))
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t c = 0; c < C; ++c) (*dx)[p * C + c] += dy[c] / static_cast<T>(P);
  };
  return g.record("global_avg_pool", std::move(y), {x}, backward);
}

template <typename T>
Var<T> scale_channels(Var<T> x, Var<T> s) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  const std::size_t P = xv.rows(), C = xv.channels();
  if (s.value().shape() != Shape{C}) throw DimensionError("scale_channels: scale extent mismatch");
  const Tensor<T>& sv = s.value();
  Tensor<T> y(xv.shape());
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t c = 0; c < C; ++c) y[p * C + c] = xv[p * C + c] * sv[c];
  const std::size_t xid = x.id(), sid = s.id();
  auto backward = [=](Graph<T>& g, const Tensor<T>& dy) {
    if (Tensor<T>* dx = g.grad_sink(xid)) {
      const Tensor<T>& sv = g.value(sid);
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t c = 0; c < C; ++c) (*dx)[p * C + c] += dy[p * C + c] * sv[c];
    }
    if (Tensor<T>* ds = g.grad_sink(sid)) {
      const Tensor<T>& xv = g.value(xid);
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t c = 0; c < C; ++c) (*ds)[c] += dy[p * C + c] * xv[p * C + c];
    }
  };
  return g.record("scale_channels", std::move(y), {x, s}, backward);
}

#define EAMAMBA_INSTANTIATE_OPS(T)                                                          \
  template Var<T> linear(Var<T>, Var<T>, std::optional<Var<T>>);                            \
  template Var<T> dwconv2d(Var<T>, Var<T>, std::optional<Var<T>>);                          \
  template Var<T> conv2d(Var<T>, Var<T>, std::optional<Var<T>>);                            \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                    \
  template Var<T> silu(Var<T>);                                                             \
  template Var<T> sigmoid(Var<T>);                                                          \
  template Var<T> ewise(Var<T>, Var<T>, EwiseKind);                                         \
  template Var<T> scale(Var<T>, T);                                                         \
  template Var<T> sum(Var<T>);                                                              \
  template Var<T> mean(Var<T>);                                                             \
  template Var<T> l1_loss(Var<T>, Var<T>);                                                  \
  template Var<T> pixel_sum(Var<T>, std::size_t, std::size_t);                              \
  template Var<T> slice_channels(Var<T>, std::size_t, std::size_t);                         \
  template Var<T> concat_channels(std::span<const Var<T>>);                                 \
  template Var<T> gather_rows(Var<T>, std::span<const std::size_t>);                        \
  template Var<T> scatter_rows(Var<T>, std::span<const std::size_t>, Shape);                \
  template Var<T> space_to_depth(Var<T>);                                                   \
  template Var<T> depth_to_space(Var<T>);                                                   \
  template Var<T> reflect_pad(Var<T>, std::size_t, std::size_t);                            \
  template Var<T> crop(Var<T>, std::size_t, std::size_t);                                   \
  template Var<T> global_avg_pool(Var<T>);                                                  \
  template Var<T> scale_channels(Var<T>, Var<T>);

EAMAMBA_INSTANTIATE_OPS(float)
EAMAMBA_INSTANTIATE_OPS(double)

}  // namespace eamamba
