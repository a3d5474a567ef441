#include <benchmark/benchmark.h>

#include "eamamba/mhssm.hpp"
#include "eamamba/ops.hpp"
#include "reference/reference.hpp"

using namespace eamamba;
using Td = Tensor<double>;

namespace {

const char* set_for(std::int64_t k) {
  switch (k) {
    case 1: return "horizontal";
    case 2: return "hilbert";
    case 4: return "2d";
    default: return "all_around";
  }
}

constexpr std::size_t kSide = 32, kChannels = 64, kGroups = 8, kState = 8;

void BM_MhssFused(benchmark::State& state) {
  Rng rng(1);
  auto p = MhssParams<double>::init("m", kChannels, kGroups, scan_set(set_for(state.range(0))), kState, rng);
  const Td x = normal<double>({kSide, kSide, kChannels}, 1.0, rng);
  CurveCache cache;
  for (auto _ : state) {
    Graph<double> g(false);
    benchmark::DoNotOptimize(mhss(g.constant(x), p, cache).value().data().data());
  }
}

void BM_MhssSerialReference(benchmark::State& state) {
  Rng rng(1);
  auto p = MhssParams<double>::init("m", kChannels, kGroups, scan_set(set_for(state.range(0))), kState, rng);
  const Td x = normal<double>({kSide, kSide, kChannels}, 1.0, rng);
  CurveCache cache;
  for (auto _ : state) {
    Graph<double> g(false);
    benchmark::DoNotOptimize(reference::mhss_composite(g.constant(x), p, cache).value().data().data());
  }
}

void BM_TwoDss(benchmark::State& state) {
  Rng rng(1);
  auto p = TwoDssParams<double>::init("t", kChannels, scan_set(set_for(state.range(0))), kState, rng);
  const Td x = normal<double>({kSide, kSide, kChannels}, 1.0, rng);
  CurveCache cache;
  for (auto _ : state) {
    Graph<double> g(false);
    benchmark::DoNotOptimize(twodss_forward(g.constant(x), p, cache).value().data().data());
  }
}

void BM_ScanKernel(benchmark::State& state) {
  Rng rng(2);
  const std::size_t L = static_cast<std::size_t>(state.range(0));
  auto p = SsmParams<double>::init("s", 8, kState, rng);
  const Td u = normal<double>({L, 8}, 1.0, rng);
  std::vector<double> y(L * 8);
  const auto w = kernels::weights_of(p);
  for (auto _ : state) {
    kernels::scan_forward<double>(u.data().data(), L, w, y.data(), nullptr);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_ScanSerialReference(benchmark::State& state) {
  Rng rng(2);
  const std::size_t L = static_cast<std::size_t>(state.range(0));
  auto p = SsmParams<double>::init("s", 8, kState, rng);
  const Td u = normal<double>({L, 8}, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(reference::selective_scan_ref(u, p).data().data());
}

void BM_DwconvParallel(benchmark::State& state) {
  Rng rng(3);
  const Td x = normal<double>({kSide * 2, kSide * 2, kChannels}, 1.0, rng);
  const Td k = normal<double>({3, 3, kChannels}, 1.0, rng);
  for (auto _ : state) {
    Graph<double> g(false);
    benchmark::DoNotOptimize(dwconv2d<double>(g.constant(x), g.constant(k)).value().data().data());
  }
}

void BM_DwconvSerialReference(benchmark::State& state) {
  Rng rng(3);
  const Td x = normal<double>({kSide * 2, kSide * 2, kChannels}, 1.0, rng);
  const Td k = normal<double>({3, 3, kChannels}, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(reference::dwconv_ref(x, k).data().data());
}

}  // namespace

BENCHMARK(BM_MhssFused)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MhssSerialReference)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TwoDss)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScanKernel)->Arg(256)->Arg(4096)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ScanSerialReference)->Arg(256)->Arg(4096)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DwconvParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DwconvSerialReference)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
