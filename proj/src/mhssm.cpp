#include "eamamba/mhssm.hpp"

#include <cmath>

#include "eamamba/errors.hpp"
#include "eamamba/ops.hpp"
#include "parallel.hpp"

namespace eamamba {

void validate_mhss(std::size_t channels, std::size_t groups, std::size_t curves) {
  if (groups == 0) throw ConfigError("mhss: number of groups must be positive");
  if (curves == 0) throw ConfigError("mhss: at least one scan curve is required");
  if (channels == 0 || channels % groups != 0)
    throw ConfigError("mhss: " + std::to_string(channels) + " channels not divisible into " +
                      std::to_string(groups) + " groups");
}

std::size_t expanded_channels(std::size_t channels, double expansion) {
  if (!(expansion > 0.0)) throw ConfigError("expansion must be positive");
  const auto inner = static_cast<std::size_t>(std::llround(expansion * double(channels)));
  if (inner == 0) throw ConfigError("expansion leaves no channels");
  return inner;
}

template <typename T>
MhssParams<T> MhssParams<T>::init(const std::string& prefix, std::size_t channels,
                                  std::size_t groups, std::vector<CurveSpec> curves,
                                  std::size_t d_state, Rng& rng) {
  validate_mhss(channels, groups, curves.size());
  MhssParams p;
  p.channels = channels;
  p.groups = groups;
  p.curves = std::move(curves);
  p.group_params.reserve(groups);
  for (std::size_t i = 0; i < groups; ++i)
    p.group_params.push_back(SsmParams<T>::init(prefix + ".group" + std::to_string(i),
                                                channels / groups, d_state, rng));
  return p;
}

template <typename T>
std::size_t MhssParams<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& g : group_params) n += g.param_count();
  return n;
}

namespace {

template <typename T>
kernels::SsmWeights<T> weights_of_vars(const SsmVars<T>& p) {
  kernels::SsmWeights<T> w;
  w.delta_weight = p.delta_weight.value().data().data();
  w.delta_bias = p.delta_bias.value().data().data();
  w.a_log = p.a_log.value().data().data();
  w.b_proj = p.b_proj.value().data().data();
  w.c_proj = p.c_proj.value().data().data();
  w.d_skip = p.d_skip.value().data().data();
  w.d_inner = p.a_log.shape()[0];
  w.d_state = p.a_log.shape()[1];
  w.simplified_bbar = p.simplified_bbar;
  return w;
}

}  // namespace

template <typename T>
Var<T> mhss(Var<T> x, std::span<const ScanCurve* const> curves,
            std::span<const SsmVars<T>> group_params) {
  Graph<T>& g = x.graph();
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("mhss: expected [H, W, C], got " + shape_str(xv.shape()));
  const std::size_t H = xv.extent(0), W = xv.extent(1), C = xv.extent(2);
  const std::size_t n = group_params.size();
  validate_mhss(C, n, curves.size());
  if (curves.size() != n) throw ContractError("mhss: one curve per group is required");
  const std::size_t Cg = C / n, L = H * W;

  std::vector<kernels::SsmWeights<T>> weights;
  std::uint64_t macs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const ScanCurve& cv = *curves[i];
    if (cv.height != H || cv.width != W)
      throw DimensionError("mhss: curve " + to_string(CurveSpec{cv.kind, cv.reversed}) + " is " +
                           std::to_string(cv.height) + "x" + std::to_string(cv.width) +
                           ", input is " + std::to_string(H) + "x" + std::to_string(W));
    const SsmVars<T>& p = group_params[i];
    if (p.a_log.shape().size() != 2 || p.a_log.shape()[0] != Cg ||
        p.delta_weight.shape() != Shape{Cg, Cg})
      throw DimensionError("mhss: group " + std::to_string(i) + " parameters do not match " +
                           std::to_string(Cg) + " channels");
    weights.push_back(weights_of_vars(p));
    macs += selective_scan_macs(L, Cg, weights.back().d_state);
  }

  const bool keep_tape = g.grad_enabled();
  auto tapes = std::make_shared<std::vector<kernels::ScanTape<T>>>(keep_tape ? n : 0);
  std::vector<const std::size_t*> orders(n);
  for (std::size_t i = 0; i < n; ++i) orders[i] = curves[i]->order.data();

  Tensor<T> y({H, W, C});
  const T* xp = xv.data().data();
  T* yp = y.data().data();
  detail::parallel_for(n, [&](std::size_t i) {
    const std::size_t* order = orders[i];
    std::vector<T> seq(L * Cg), out(L * Cg);
    for (std::size_t t = 0; t < L; ++t)
      std::copy_n(xp + order[t] * C + i * Cg, Cg, seq.data() + t * Cg);
    kernels::scan_forward(seq.data(), L, weights[i], out.data(),
                          keep_tape ? &(*tapes)[i] : nullptr);
    for (std::size_t t = 0; t < L; ++t)
      std::copy_n(out.data() + t * Cg, Cg, yp + order[t] * C + i * Cg);
  });

  std::vector<Var<T>> inputs{x};
  for (const auto& p : group_params)
    for (const Var<T>& v : {p.delta_weight, p.delta_bias, p.a_log, p.b_proj, p.c_proj, p.d_skip})
      inputs.push_back(v);

  std::vector<std::vector<std::size_t>> order_copy(n);
  for (std::size_t i = 0; i < n; ++i) order_copy[i] = curves[i]->order;
  std::vector<SsmVars<T>> pv(group_params.begin(), group_params.end());
  const std::size_t xid = x.id();
  auto backward = [xid, pv = std::move(pv), orders = std::move(order_copy), tapes, L, C, Cg](
                      Graph<T>& g, const Tensor<T>& dy) {
    const std::size_t n = pv.size();
    Tensor<T>* dx = g.grad_sink(xid);
    auto sink = [&g](const Var<T>& v) -> T* {
      Tensor<T>* t = g.grad_sink(v.id());
      return t ? t->data().data() : nullptr;
    };
    // Sinks are allocated serially; the groups then write disjoint memory.
    std::vector<kernels::SsmGrads<T>> grads(n);
    std::vector<kernels::SsmWeights<T>> weights(n);
    for (std::size_t i = 0; i < n; ++i) {
      grads[i] = {sink(pv[i].delta_weight), sink(pv[i].delta_bias), sink(pv[i].a_log),
                  sink(pv[i].b_proj),       sink(pv[i].c_proj),     sink(pv[i].d_skip)};
      weights[i] = weights_of_vars(pv[i]);
    }
    const T* dyp = dy.data().data();
    T* dxp = dx ? dx->data().data() : nullptr;
    detail::parallel_for(n, [&](std::size_t i) {
      const std::size_t* order = orders[i].data();
      std::vector<T> dseq(L * Cg), du(L * Cg, T(0));
      for (std::size_t t = 0; t < L; ++t)
        std::copy_n(dyp + order[t] * C + i * Cg, Cg, dseq.data() + t * Cg);
      kernels::scan_backward((*tapes)[i], weights[i], dseq.data(), dxp ? du.data() : nullptr,
                             grads[i]);
      if (dxp)
        for (std::size_t t = 0; t < L; ++t) {
          T* dst = dxp + order[t] * C + i * Cg;
          for (std::size_t c = 0; c < Cg; ++c) dst[c] += du[t * Cg + c];
        }
    });
  };
  return g.record("selective_scan", std::move(y), std::span<const Var<T>>(inputs), backward, macs);
}

template <typename T>
Var<T> mhss(Var<T> x, MhssParams<T>& p, CurveCache& cache) {
  Graph<T>& g = x.graph();
  if (x.shape().size() != 3) throw DimensionError("mhss: expected [H, W, C]");
  if (x.shape()[2] != p.channels)
    throw DimensionError("mhss: input has " + std::to_string(x.shape()[2]) +
                         " channels, parameters expect " + std::to_string(p.channels));
  const std::size_t H = x.shape()[0], W = x.shape()[1];
  std::vector<std::shared_ptr<const ScanCurve>> held;
  std::vector<const ScanCurve*> curves;
  std::vector<SsmVars<T>> vars;
  for (std::size_t i = 0; i < p.groups; ++i) {
    held.push_back(cache.get(p.curve_of(i), H, W));
    curves.push_back(held.back().get());
    vars.push_back(bind(g, p.group_params[i]));
  }
  return mhss(x, std::span<const ScanCurve* const>(curves), std::span<const SsmVars<T>>(vars));
}

template <typename T>
MhssmParams<T> MhssmParams<T>::init(const std::string& prefix, std::size_t channels,
                                    double expansion, std::size_t groups,
                                    std::vector<CurveSpec> curves, std::size_t d_state, Rng& rng) {
  MhssmParams p;
  p.channels = channels;
  p.inner = expanded_channels(channels, expansion);
  const std::size_t D = p.inner;
  validate_mhss(D, groups, curves.size());
  p.in_proj_left = Parameter<T>(prefix + ".in_proj_left", trunc_normal<T>({channels, D}, 0.02, rng));
  p.in_proj_right =
      Parameter<T>(prefix + ".in_proj_right", trunc_normal<T>({channels, D}, 0.02, rng));
  p.dwconv_weight = Parameter<T>(prefix + ".dwconv_weight", trunc_normal<T>({3, 3, D}, 0.02, rng));
  p.dwconv_bias = Parameter<T>(prefix + ".dwconv_bias", Tensor<T>::zeros({D}));
  p.mhss = MhssParams<T>::init(prefix + ".mhss", D, groups, std::move(curves), d_state, rng);
  p.norm_gamma = Parameter<T>(prefix + ".norm_gamma", Tensor<T>::ones({D}));
  p.norm_beta = Parameter<T>(prefix + ".norm_beta", Tensor<T>::zeros({D}));
  p.out_proj = Parameter<T>(prefix + ".out_proj", trunc_normal<T>({D, channels}, 0.02, rng));
  return p;
}

template <typename T>
std::size_t MhssmParams<T>::param_count() const {
  return in_proj_left.size() + in_proj_right.size() + dwconv_weight.size() + dwconv_bias.size() +
         mhss.param_count() + norm_gamma.size() + norm_beta.size() + out_proj.size();
}

template <typename T>
Var<T> mhssm_forward(Var<T> x, MhssmParams<T>& p, CurveCache& cache) {
  Graph<T>& g = x.graph();
  if (x.shape().size() != 3 || x.shape()[2] != p.channels)
    throw DimensionError("mhssm: input " + shape_str(x.shape()) + " does not have " +
                         std::to_string(p.channels) + " channels");
  Var<T> left = linear(x, g.parameter(p.in_proj_left));
  left = dwconv2d<T>(left, g.parameter(p.dwconv_weight), g.parameter(p.dwconv_bias));
  left = silu(left);
  left = mhss(left, p.mhss, cache);
  left = layer_norm(left, g.parameter(p.norm_gamma), g.parameter(p.norm_beta));
  Var<T> gate = silu(linear(x, g.parameter(p.in_proj_right)));
  return linear(mul(left, gate), g.parameter(p.out_proj));
}

template <typename T>
TwoDssParams<T> TwoDssParams<T>::init(const std::string& prefix, std::size_t channels,
                                      std::vector<CurveSpec> curves, std::size_t d_state,
                                      Rng& rng) {
  validate_mhss(channels, 1, curves.size());
  TwoDssParams p;
  p.channels = channels;
  p.curves = std::move(curves);
  for (std::size_t i = 0; i < p.curves.size(); ++i)
    p.curve_params.push_back(
        SsmParams<T>::init(prefix + ".curve" + std::to_string(i), channels, d_state, rng));
  return p;
}

template <typename T>
std::size_t TwoDssParams<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& c : curve_params) n += c.param_count();
  return n;
}

template <typename T>
Var<T> twodss_forward(Var<T> x, TwoDssParams<T>& p, CurveCache& cache) {
  Graph<T>& g = x.graph();
  if (x.shape().size() != 3 || x.shape()[2] != p.channels)
    throw DimensionError("twodss: input " + shape_str(x.shape()) + " does not have " +
                         std::to_string(p.channels) + " channels");
  const std::size_t H = x.shape()[0], W = x.shape()[1];
  Var<T> total;
  for (std::size_t i = 0; i < p.curves.size(); ++i) {
    auto curve = cache.get(p.curves[i], H, W);
    Var<T> seq = apply_curve(x, *curve);
    Var<T> out = invert_curve(selective_scan(seq, bind(g, p.curve_params[i])), *curve);
    total = total.valid() ? add(total, out) : out;
  }
  return total;
}

#define EAMAMBA_INSTANTIATE_MHSSM(T)                                                       \
  template struct MhssParams<T>;                                                           \
  template struct MhssmParams<T>;                                                          \
  template struct TwoDssParams<T>;                                                         \
  template Var<T> mhss(Var<T>, std::span<const ScanCurve* const>, std::span<const SsmVars<T>>); \
  template Var<T> mhss(Var<T>, MhssParams<T>&, CurveCache&);                               \
  template Var<T> mhssm_forward(Var<T>, MhssmParams<T>&, CurveCache&);                     \
  template Var<T> twodss_forward(Var<T>, TwoDssParams<T>&, CurveCache&);

EAMAMBA_INSTANTIATE_MHSSM(float)
EAMAMBA_INSTANTIATE_MHSSM(double)

}  // namespace eamamba
