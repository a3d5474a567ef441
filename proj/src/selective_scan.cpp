#include "eamamba/selective_scan.hpp"

#include <cmath>
#include <memory>

#include "eamamba/errors.hpp"

namespace eamamba {

namespace {

template <typename T>
T softplus(T z) {
  return z > T(20) ? z : std::log1p(std::exp(z));
}

template <typename T>
T sigmoid_scalar(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

// Abar = exp(delta A) and Bbar / B = expm1(delta A) / A (delta when A == 0),
// sharing one expm1.
template <typename T>
std::pair<T, T> zoh(T delta, T a, bool simplified) {
  const T em1 = std::expm1(delta * a);
  const T gain = simplified || a == T(0) ? delta : em1 / a;
  return {em1 + T(1), gain};
}

template <typename T>
std::vector<T> negative_a(const T* a_log, std::size_t n) {
  std::vector<T> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = -std::exp(a_log[i]);
  return a;
}

}  // namespace

template <typename T>
SsmParams<T> SsmParams<T>::init(const std::string& prefix, std::size_t d_inner,
                                std::size_t d_state, Rng& rng) {
  if (d_inner == 0 || d_state == 0) throw ConfigError("SsmParams: d_inner and d_state must be positive");
  SsmParams p;
  p.d_inner = d_inner;
  p.d_state = d_state;
  const std::size_t Cg = d_inner, Ns = d_state;
  p.delta_weight = Parameter<T>(prefix + ".delta_weight", trunc_normal<T>({Cg, Cg}, 0.02, rng));

  Tensor<T> bias({Cg});
  std::uniform_real_distribution<double> logdt(std::log(1e-3), std::log(1e-1));
  for (T& v : bias.data()) {
    const double dt = std::exp(logdt(rng));
    v = static_cast<T>(dt + std::log(-std::expm1(-dt)));  // softplus^{-1}(dt)
  }
  p.delta_bias = Parameter<T>(prefix + ".delta_bias", std::move(bias));

  Tensor<T> a_log({Cg, Ns});
  for (std::size_t c = 0; c < Cg; ++c)
    for (std::size_t s = 0; s < Ns; ++s) a_log[c * Ns + s] = static_cast<T>(std::log(double(s + 1)));
  p.a_log = Parameter<T>(prefix + ".a_log", std::move(a_log));

  const double bound = 1.0 / std::sqrt(static_cast<double>(Cg));
  p.b_proj = Parameter<T>(prefix + ".b_proj", uniform<T>({Cg, Ns}, -bound, bound, rng));
  p.c_proj = Parameter<T>(prefix + ".c_proj", uniform<T>({Cg, Ns}, -bound, bound, rng));
  p.d_skip = Parameter<T>(prefix + ".d_skip", Tensor<T>::ones({Cg}));
  return p;
}

template <typename T>
std::size_t SsmParams<T>::param_count() const {
  return delta_weight.size() + delta_bias.size() + a_log.size() + b_proj.size() + c_proj.size() +
         d_skip.size();
}

template <typename T>
SsmVars<T> bind(Graph<T>& g, SsmParams<T>& p) {
  SsmVars<T> v;
  v.delta_weight = g.parameter(p.delta_weight);
  v.delta_bias = g.parameter(p.delta_bias);
  v.a_log = g.parameter(p.a_log);
  v.b_proj = g.parameter(p.b_proj);
  v.c_proj = g.parameter(p.c_proj);
  v.d_skip = g.parameter(p.d_skip);
  v.simplified_bbar = p.simplified_bbar;
  return v;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> discretize(const Tensor<T>& delta, const Tensor<T>& a,
                                           const Tensor<T>& b, bool simplified_bbar) {
  if (delta.rank() != 2 || a.rank() != 2 || b.rank() != 2)
    throw DimensionError("discretize: expected delta [L, Cg], A [Cg, Ns], B [L, Ns]");
  const std::size_t L = delta.extent(0), Cg = delta.extent(1), Ns = a.extent(1);
  if (a.extent(0) != Cg || b.extent(0) != L || b.extent(1) != Ns)
    throw DimensionError("discretize: inconsistent extents");
  Tensor<T> abar({L, Cg, Ns}), bbar({L, Cg, Ns});
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < Cg; ++c)
      for (std::size_t s = 0; s < Ns; ++s) {
        const T d = delta[t * Cg + c], av = a[c * Ns + s];
        const auto [decay, gain] = zoh(d, av, simplified_bbar);
        abar[(t * Cg + c) * Ns + s] = decay;
        bbar[(t * Cg + c) * Ns + s] = gain * b[t * Ns + s];
      }
  return {std::move(abar), std::move(bbar)};
}

namespace kernels {

template <typename T>
SsmWeights<T> weights_of(const SsmParams<T>& p) {
  SsmWeights<T> w;
  w.delta_weight = p.delta_weight.value.data().data();
  w.delta_bias = p.delta_bias.value.data().data();
  w.a_log = p.a_log.value.data().data();
  w.b_proj = p.b_proj.value.data().data();
  w.c_proj = p.c_proj.value.data().data();
  w.d_skip = p.d_skip.value.data().data();
  w.d_inner = p.d_inner;
  w.d_state = p.d_state;
  w.simplified_bbar = p.simplified_bbar;
  return w;
}

template <typename T>
void scan_forward(const T* u, std::size_t L, const SsmWeights<T>& w, T* y, ScanTape<T>* tape) {
  const std::size_t Cg = w.d_inner, Ns = w.d_state;
  const std::vector<T> a = negative_a(w.a_log, Cg * Ns);

  std::vector<T> z_buf(Cg), delta_buf(Cg), b_buf(Ns), c_buf(Ns);
  std::vector<T> abar_buf(Cg * Ns), gain_buf(Cg * Ns);
  std::vector<T> h(Cg * Ns, T(0));
  if (tape) {
    tape->length = L;
    tape->u.assign(u, u + L * Cg);
    tape->z.resize(L * Cg);
    tape->delta.resize(L * Cg);
    tape->b.resize(L * Ns);
    tape->c.resize(L * Ns);
    tape->abar.resize(L * Cg * Ns);
    tape->gain.resize(L * Cg * Ns);
    tape->h.resize(L * Cg * Ns);
  }

  for (std::size_t t = 0; t < L; ++t) {
    const T* ut = u + t * Cg;
    T* z = tape ? tape->z.data() + t * Cg : z_buf.data();
    T* delta = tape ? tape->delta.data() + t * Cg : delta_buf.data();
    T* bt = tape ? tape->b.data() + t * Ns : b_buf.data();
    T* ct = tape ? tape->c.data() + t * Ns : c_buf.data();
    T* abar = tape ? tape->abar.data() + t * Cg * Ns : abar_buf.data();
    T* gain = tape ? tape->gain.data() + t * Cg * Ns : gain_buf.data();

    for (std::size_t c = 0; c < Cg; ++c) z[c] = w.delta_bias[c];
    for (std::size_t s = 0; s < Ns; ++s) bt[s] = ct[s] = T(0);
    for (std::size_t i = 0; i < Cg; ++i) {
      const T ui = ut[i];
      const T* wd = w.delta_weight + i * Cg;
      for (std::size_t c = 0; c < Cg; ++c) z[c] += ui * wd[c];
      const T* wb = w.b_proj + i * Ns;
      const T* wc = w.c_proj + i * Ns;
      for (std::size_t s = 0; s < Ns; ++s) {
        bt[s] += ui * wb[s];
        ct[s] += ui * wc[s];
      }
    }
    for (std::size_t c = 0; c < Cg; ++c) delta[c] = softplus(z[c]);

    T* yt = y + t * Cg;
    for (std::size_t c = 0; c < Cg; ++c) {
      const T d = delta[c];
      const T uc = ut[c];
      T* hc = h.data() + c * Ns;
      const T* ac = a.data() + c * Ns;
      T* abc = abar + c * Ns;
      T* gc = gain + c * Ns;
      T acc = T(0);
      for (std::size_t s = 0; s < Ns; ++s) {
        const auto [decay, g] = zoh(d, ac[s], w.simplified_bbar);
        abc[s] = decay;
        gc[s] = g;
        hc[s] = decay * hc[s] + g * bt[s] * uc;
        acc += ct[s] * hc[s];
      }
      yt[c] = acc + w.d_skip[c] * uc;
      if (!std::isfinite(yt[c]))
        throw NumericError("selective_scan: non-finite output at step " + std::to_string(t) +
                           ", channel " + std::to_string(c));
    }
    if (tape) std::copy(h.begin(), h.end(), tape->h.begin() + t * Cg * Ns);
  }
}

template <typename T>
void scan_backward(const ScanTape<T>& tape, const SsmWeights<T>& w, const T* dy, T* du,
                   const SsmGrads<T>& grads) {
  const std::size_t L = tape.length, Cg = w.d_inner, Ns = w.d_state;
  const std::vector<T> a = negative_a(w.a_log, Cg * Ns);
  std::vector<T> dA(Cg * Ns, T(0));
  std::vector<T> carry(Cg * Ns, T(0));  // dL/dh_t flowing from step t + 1
  std::vector<T> dut(Cg), ddelta(Cg), dz(Cg), db(Ns), dc(Ns);

  for (std::size_t t = L; t-- > 0;) {
    const T* ut = tape.u.data() + t * Cg;
    const T* delta = tape.delta.data() + t * Cg;
    const T* z = tape.z.data() + t * Cg;
    const T* bt = tape.b.data() + t * Ns;
    const T* ct = tape.c.data() + t * Ns;
    const T* abar = tape.abar.data() + t * Cg * Ns;
    const T* gain = tape.gain.data() + t * Cg * Ns;
    const T* ht = tape.h.data() + t * Cg * Ns;
    const T* hprev = t > 0 ? tape.h.data() + (t - 1) * Cg * Ns : nullptr;
    const T* dyt = dy + t * Cg;

    std::fill(dut.begin(), dut.end(), T(0));
    std::fill(ddelta.begin(), ddelta.end(), T(0));
    std::fill(db.begin(), db.end(), T(0));
    std::fill(dc.begin(), dc.end(), T(0));

    for (std::size_t c = 0; c < Cg; ++c) {
      const T gy = dyt[c];
      const T uc = ut[c];
      const T d = delta[c];
      if (grads.d_skip) grads.d_skip[c] += gy * uc;
      dut[c] += gy * w.d_skip[c];
      for (std::size_t s = 0; s < Ns; ++s) {
        const std::size_t k = c * Ns + s;
        dc[s] += gy * ht[k];
        const T dh = gy * ct[s] + carry[k];
        const T hp = hprev ? hprev[k] : T(0);
        const T dabar = dh * hp;
        const T dgain = dh * bt[s] * uc;
        db[s] += dh * gain[k] * uc;
        dut[c] += dh * gain[k] * bt[s];
        carry[k] = dh * abar[k];

        const T av = a[k];
        ddelta[c] += dabar * abar[k] * av;
        dA[k] += dabar * abar[k] * d;
        if (w.simplified_bbar) {
          ddelta[c] += dgain;
        } else if (av != T(0)) {
          ddelta[c] += dgain * abar[k];
          dA[k] += dgain * (d * abar[k] - gain[k]) / av;
        } else {
          ddelta[c] += dgain;
          dA[k] += dgain * d * d / T(2);
        }
      }
    }

    for (std::size_t c = 0; c < Cg; ++c) dz[c] = ddelta[c] * sigmoid_scalar(z[c]);
    if (grads.delta_bias)
      for (std::size_t c = 0; c < Cg; ++c) grads.delta_bias[c] += dz[c];
    for (std::size_t i = 0; i < Cg; ++i) {
      const T ui = ut[i];
      const T* wd = w.delta_weight + i * Cg;
      const T* wb = w.b_proj + i * Ns;
      const T* wc = w.c_proj + i * Ns;
      T acc = T(0);
      for (std::size_t c = 0; c < Cg; ++c) acc += wd[c] * dz[c];
      for (std::size_t s = 0; s < Ns; ++s) acc += wb[s] * db[s] + wc[s] * dc[s];
      dut[i] += acc;
      if (grads.delta_weight) {
        T* gw = grads.delta_weight + i * Cg;
        for (std::size_t c = 0; c < Cg; ++c) gw[c] += ui * dz[c];
      }
      if (grads.b_proj) {
        T* gb = grads.b_proj + i * Ns;
        for (std::size_t s = 0; s < Ns; ++s) gb[s] += ui * db[s];
      }
      if (grads.c_proj) {
        T* gc = grads.c_proj + i * Ns;
        for (std::size_t s = 0; s < Ns; ++s) gc[s] += ui * dc[s];
      }
    }
    if (du)
      for (std::size_t c = 0; c < Cg; ++c) du[t * Cg + c] += dut[c];
  }

  // A = -exp(a_log), so dA/da_log = A.
  if (grads.a_log)
    for (std::size_t k = 0; k < Cg * Ns; ++k) grads.a_log[k] += dA[k] * a[k];
}

template SsmWeights<float> weights_of(const SsmParams<float>&);
template SsmWeights<double> weights_of(const SsmParams<double>&);
template void scan_forward(const float*, std::size_t, const SsmWeights<float>&, float*,
                           ScanTape<float>*);
template void scan_forward(const double*, std::size_t, const SsmWeights<double>&, double*,
                           ScanTape<double>*);
template void scan_backward(const ScanTape<float>&, const SsmWeights<float>&, const float*, float*,
                            const SsmGrads<float>&);
template void scan_backward(const ScanTape<double>&, const SsmWeights<double>&, const double*,
                            double*, const SsmGrads<double>&);

}  // namespace kernels

template <typename T>
Var<T> selective_scan(Var<T> u, const SsmVars<T>& p) {
  Graph<T>& g = u.graph();
  const Tensor<T>& uv = u.value();
  if (uv.rank() != 2) throw DimensionError("selective_scan: expected u [L, Cg], got " + shape_str(uv.shape()));
  const std::size_t L = uv.extent(0), Cg = uv.extent(1);
  const Shape& ash = p.a_log.shape();
  if (ash.size() != 2 || ash[0] != Cg) throw DimensionError("selective_scan: a_log must be [Cg, Ns]");
  const std::size_t Ns = ash[1];
  if (p.delta_weight.shape() != Shape{Cg, Cg} || p.delta_bias.shape() != Shape{Cg} ||
      p.b_proj.shape() != Shape{Cg, Ns} || p.c_proj.shape() != Shape{Cg, Ns} ||
      p.d_skip.shape() != Shape{Cg})
    throw DimensionError("selective_scan: parameter shapes inconsistent with Cg=" +
                         std::to_string(Cg) + ", Ns=" + std::to_string(Ns));

  kernels::SsmWeights<T> w;
  w.delta_weight = p.delta_weight.value().data().data();
  w.delta_bias = p.delta_bias.value().data().data();
  w.a_log = p.a_log.value().data().data();
  w.b_proj = p.b_proj.value().data().data();
  w.c_proj = p.c_proj.value().data().data();
  w.d_skip = p.d_skip.value().data().data();
  w.d_inner = Cg;
  w.d_state = Ns;
  w.simplified_bbar = p.simplified_bbar;

  Tensor<T> y({L, Cg});
  auto tape = g.grad_enabled() ? std::make_shared<kernels::ScanTape<T>>() : nullptr;
  kernels::scan_forward(uv.data().data(), L, w, y.data().data(), tape.get());

  const std::size_t uid = u.id();
  const SsmVars<T> pv = p;
  auto backward = [uid, pv, tape, Cg, Ns](Graph<T>& g, const Tensor<T>& dy) {
    kernels::SsmWeights<T> w;
    w.delta_weight = pv.delta_weight.value().data().data();
    w.delta_bias = pv.delta_bias.value().data().data();
    w.a_log = pv.a_log.value().data().data();
    w.b_proj = pv.b_proj.value().data().data();
    w.c_proj = pv.c_proj.value().data().data();
    w.d_skip = pv.d_skip.value().data().data();
    w.d_inner = Cg;
    w.d_state = Ns;
    w.simplified_bbar = pv.simplified_bbar;
    auto sink = [&g](const Var<T>& v) -> T* {
      Tensor<T>* t = g.grad_sink(v.id());
      return t ? t->data().data() : nullptr;
    };
    kernels::SsmGrads<T> grads{sink(pv.delta_weight), sink(pv.delta_bias), sink(pv.a_log),
                               sink(pv.b_proj),       sink(pv.c_proj),     sink(pv.d_skip)};
    Tensor<T>* du = g.grad_sink(uid);
    kernels::scan_backward(*tape, w, dy.data().data(), du ? du->data().data() : nullptr, grads);
  };
  return g.record("selective_scan", std::move(y),
                  {u, p.delta_weight, p.delta_bias, p.a_log, p.b_proj, p.c_proj, p.d_skip},
                  backward, selective_scan_macs(L, Cg, Ns));
}

template struct SsmParams<float>;
template struct SsmParams<double>;
template SsmVars<float> bind(Graph<float>&, SsmParams<float>&);
template SsmVars<double> bind(Graph<double>&, SsmParams<double>&);
template std::pair<Tensor<float>, Tensor<float>> discretize(const Tensor<float>&,
                                                            const Tensor<float>&,
                                                            const Tensor<float>&, bool);
template std::pair<Tensor<double>, Tensor<double>> discretize(const Tensor<double>&,
                                                              const Tensor<double>&,
                                                              const Tensor<double>&, bool);
template Var<float> selective_scan(Var<float>, const SsmVars<float>&);
template Var<double> selective_scan(Var<double>, const SsmVars<double>&);

}  // namespace eamamba
