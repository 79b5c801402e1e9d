#include <benchmark/benchmark.h>

#include "rffkit/eval.hpp"
#include "rffkit/rng.hpp"

using namespace rffkit;

namespace {

Tensor blobs(std::size_t n, std::size_t d, std::size_t k, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double center = static_cast<double>(i % k) * 8.0;
        for (std::size_t j = 0; j < d; ++j) t.at2(i, j) = center + rng.normal(0.0, 0.5);
    }
    return t;
}

void BM_KMeans(benchmark::State& state) {
    Tensor pts = blobs(static_cast<std::size_t>(state.range(0)), 16, 4, 3);
    for (auto _ : state) {
        KMeansResult km = kmeans(pts, 4, 7);
        benchmark::DoNotOptimize(km.assignments.data());
    }
}
BENCHMARK(BM_KMeans)->Arg(256)->Arg(1024);

void BM_Silhouette(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Tensor pts = blobs(n, 16, 4, 3);
    KMeansResult km = kmeans(pts, 4, 7);
    for (auto _ : state) {
        SilhouetteResult s = silhouette(pts, km.assignments);
        benchmark::DoNotOptimize(s.mean);
    }
}
BENCHMARK(BM_Silhouette)->Arg(256)->Arg(512);

void BM_PcaProject(benchmark::State& state) {
    Tensor pts = blobs(static_cast<std::size_t>(state.range(0)), 64, 4, 9);
    for (auto _ : state) {
        PcaResult p = pca_project(pts, 2);
        benchmark::DoNotOptimize(p.projected.data.data());
    }
}
BENCHMARK(BM_PcaProject)->Arg(512)->Arg(2048);

}  // namespace
