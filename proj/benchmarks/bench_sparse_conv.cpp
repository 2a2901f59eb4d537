#include <benchmark/benchmark.h>

#include <algorithm>

#include "san/autograd.hpp"
#include "san/dense_ops.hpp"
#include "san/kernel_map.hpp"
#include "san/rng.hpp"
#include "san/sparse_ops.hpp"

namespace {

using san::Coord;

// Random unique coordinates covering `density` of a size x size grid.
std::vector<Coord> random_coords(int size, double density, std::uint64_t seed) {
  std::vector<Coord> all;
  for (int v = 0; v < size; ++v) {
    for (int u = 0; u < size; ++u) all.push_back({u, v, 0});
  }
  san::Rng rng(seed);
  rng.shuffle(all);
  all.resize(std::size_t(density * double(all.size())));
  std::sort(all.begin(), all.end());
  return all;
}

san::Tensor<float> random_tensor(san::Shape shape, std::uint64_t seed) {
  san::Tensor<float> t(std::move(shape));
  san::Rng rng(seed);
  for (auto& x : t.vec()) x = float(rng.uniform(-1, 1));
  return t;
}

constexpr int kGrid = 64;

void BM_BuildKernelMap(benchmark::State& state) {
  const double density = double(state.range(0)) / 100.0;
  const auto coords = random_coords(kGrid, density, 1);
  for (auto _ : state) {
    auto km = san::build_kernel_map(coords, 3, int(state.range(1)), kGrid, kGrid);
    benchmark::DoNotOptimize(km);
  }
  state.counters["points"] = double(coords.size());
}
BENCHMARK(BM_BuildKernelMap)->ArgsProduct({{1, 5, 20, 100}, {1, 2}});

void BM_SparseConv(benchmark::State& state) {
  const double density = double(state.range(0)) / 100.0;
  const int ch = int(state.range(1));
  const auto coords = random_coords(kGrid, density, 2);
  const auto km = san::build_kernel_map(coords, 3, 1, kGrid, kGrid);
  san::SparseTensor<float> s(coords, random_tensor({int(coords.size()), ch}, 3), kGrid, kGrid);
  const auto x = san::sparse_leaf(s);
  const auto w = san::make_leaf(random_tensor({9, ch, ch}, 4));
  const auto b = san::make_leaf(random_tensor({ch}, 5));
  san::NoGradGuard no_grad;
  for (auto _ : state) {
    auto y = san::sparse_conv2d(x, w, b, km);
    benchmark::DoNotOptimize(y.feats->value.data());
  }
  state.counters["points"] = double(coords.size());
}
BENCHMARK(BM_SparseConv)->ArgsProduct({{1, 5, 20, 100}, {16, 64}});

// Dense reference at the same grid and width: the cost sparse conv avoids.
void BM_DenseConv(benchmark::State& state) {
  const int ch = int(state.range(0));
  const auto x = san::make_leaf(random_tensor({ch, kGrid, kGrid}, 6));
  const auto w = san::make_leaf(random_tensor({ch, ch, 3, 3}, 7));
  const auto b = san::make_leaf(random_tensor({ch}, 8));
  san::NoGradGuard no_grad;
  for (auto _ : state) {
    auto y = san::conv2d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y->value.data());
  }
}
BENCHMARK(BM_DenseConv)->Arg(16)->Arg(64);

void BM_SparseConvBackward(benchmark::State& state) {
  const int ch = 16;
  const auto coords = random_coords(kGrid, double(state.range(0)) / 100.0, 9);
  const auto km = san::build_kernel_map(coords, 3, 1, kGrid, kGrid);
  san::SparseTensor<float> s(coords, random_tensor({int(coords.size()), ch}, 10), kGrid, kGrid);
  const auto w = san::make_leaf(random_tensor({9, ch, ch}, 11), true);
  const auto b = san::make_leaf(random_tensor({ch}, 12), true);
  for (auto _ : state) {
    const auto x = san::sparse_leaf(s, true);
    auto y = san::sparse_conv2d(x, w, b, km);
    san::backward(san::sum(y.feats));
    benchmark::DoNotOptimize(w->grad.data());
  }
}
BENCHMARK(BM_SparseConvBackward)->Arg(5)->Arg(20);

}  // namespace

BENCHMARK_MAIN();
