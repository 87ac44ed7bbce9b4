#include <random>

#include <benchmark/benchmark.h>

#include "rankclust/cluster.hpp"
#include "rankclust/codec.hpp"
#include "rankclust/transforms.hpp"

using namespace rankclust;

namespace {

DenseMatrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 0.02f);
  std::vector<float> v(rows * cols);
  for (auto& x : v) x = d(rng);
  return DenseMatrix(rows, cols, std::move(v));
}

std::vector<float> input(std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d;
  std::vector<float> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

void BM_DenseMatvec(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto w = gaussian(n, n, 2);
  const auto x = input(n);
  for (auto _ : state) benchmark::DoNotOptimize(matvec(w, x));
}

void BM_LutMatvec(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto cm = cluster_matrix(gaussian(n, n, 2), static_cast<std::size_t>(state.range(1)));
  const auto x = input(n);
  for (auto _ : state) benchmark::DoNotOptimize(lut_matvec(cm, x));
}

void BM_Rebuild(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto cm = cluster_matrix(gaussian(n, n, 2), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(reconstruct(cm));
}

void BM_KMeans(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto w = gaussian(n, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(cluster_matrix(w, static_cast<std::size_t>(state.range(1))));
}

void BM_PackUnpack(benchmark::State& state) {
  const auto cm = cluster_matrix(gaussian(256, 256, 4), static_cast<std::size_t>(state.range(0)));
  const std::vector<NamedClustered> t{{"w", cm}};
  for (auto _ : state) benchmark::DoNotOptimize(unpack(pack(t)));
}

void BM_Transform(benchmark::State& state) {
  const auto cm = cluster_matrix(gaussian(256, 256, 5), 32);
  const auto t = CentroidTransform::seeded(TransformKind::sorted_gaussian, 1).corrected();
  for (auto _ : state) benchmark::DoNotOptimize(apply(cm, t));
}

}  // namespace

BENCHMARK(BM_DenseMatvec)->Arg(128)->Arg(256)->Arg(512);
BENCHMARK(BM_LutMatvec)->Args({128, 32})->Args({256, 32})->Args({512, 32})->Args({256, 8});
BENCHMARK(BM_Rebuild)->Args({256, 32});
BENCHMARK(BM_KMeans)->Args({256, 16})->Args({256, 64});
BENCHMARK(BM_PackUnpack)->Arg(16)->Arg(64);
BENCHMARK(BM_Transform);
BENCHMARK_MAIN();
