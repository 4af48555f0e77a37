// Production kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "egmsynth/kernels.hpp"

using namespace egmsynth;
using kernels::ConvGeometry;

namespace {

std::vector<double> randv(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

struct ConvCase {
  int ic = 16, oc = 32, h = 50, w = 256;
  ConvGeometry g{5, 5, 1, 1, 2, 2};
  std::vector<double> x = randv(static_cast<std::size_t>(ic) * h * w, 1);
  std::vector<double> wt = randv(static_cast<std::size_t>(oc) * ic * 25, 2);
  std::vector<double> b = randv(oc, 3);
  std::vector<double> y = std::vector<double>(static_cast<std::size_t>(oc) * h * w);
};

template <bool Reference>
void BM_Conv2dForward(benchmark::State& state) {
  ConvCase c;
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::conv2d_forward(c.x.data(), c.ic, c.h, c.w, c.wt.data(), c.b.data(), c.oc, c.g, c.y.data());
    else
      kernels::conv2d_forward(c.x.data(), c.ic, c.h, c.w, c.wt.data(), c.b.data(), c.oc, c.g, c.y.data());
    benchmark::DoNotOptimize(c.y.data());
  }
}

template <bool Reference>
void BM_ConvTransposeForward(benchmark::State& state) {
  const int ic = 32, oc = 16, h = 25, w = 128;
  const ConvGeometry g{4, 4, 2, 2, 1, 1};
  const auto x = randv(static_cast<std::size_t>(ic) * h * w, 4);
  const auto wt = randv(static_cast<std::size_t>(ic) * oc * 16, 5);
  const auto b = randv(oc, 6);
  std::vector<double> y(static_cast<std::size_t>(oc) * g.transposed_h(h) * g.transposed_w(w));
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::conv_transpose2d_forward(x.data(), ic, h, w, wt.data(), b.data(), oc, g, y.data());
    else
      kernels::conv_transpose2d_forward(x.data(), ic, h, w, wt.data(), b.data(), oc, g, y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

std::vector<EgmTensor> signals(int n, std::uint64_t seed) {
  std::vector<EgmTensor> out;
  for (int i = 0; i < n; ++i) {
    const auto v = randv(200 * 256, seed + i);
    out.push_back({Eigen::Map<const Matrix>(v.data(), 200, 256), 200.0, RhythmClass::Sinus});
  }
  return out;
}

template <bool Reference>
void BM_PairwiseRmse(benchmark::State& state) {
  const auto a = signals(32, 10), b = signals(16, 100);
  for (auto _ : state) {
    Matrix s = Reference ? kernels::reference::pairwise_rmse(a, b) : kernels::pairwise_rmse(a, b);
    benchmark::DoNotOptimize(s.data());
  }
}

template <bool Reference>
void BM_RbfGram(benchmark::State& state) {
  const auto xv = randv(400 * 1024, 7), yv = randv(300 * 1024, 8);
  const Matrix x = Eigen::Map<const Matrix>(xv.data(), 400, 1024);
  const Matrix y = Eigen::Map<const Matrix>(yv.data(), 300, 1024);
  for (auto _ : state) {
    Matrix k = Reference ? kernels::reference::rbf_gram(x, y, 10.0) : kernels::rbf_gram(x, y, 10.0);
    benchmark::DoNotOptimize(k.data());
  }
}

}  // namespace

BENCHMARK(BM_Conv2dForward<true>)->Name("conv2d/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dForward<false>)->Name("conv2d/im2col")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTransposeForward<true>)->Name("conv_transpose2d/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTransposeForward<false>)->Name("conv_transpose2d/gemm")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PairwiseRmse<true>)->Name("pairwise_rmse/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PairwiseRmse<false>)->Name("pairwise_rmse/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RbfGram<true>)->Name("rbf_gram/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RbfGram<false>)->Name("rbf_gram/gemm")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
