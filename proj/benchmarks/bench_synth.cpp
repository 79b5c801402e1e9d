#include <benchmark/benchmark.h>

#include "rffkit/experiment.hpp"
#include "rffkit/signal.hpp"

using namespace rffkit;

namespace {

void BM_SynthBurst(benchmark::State& state) {
    const auto specs = population_preset("four-emitters-easy");
    std::uint64_t seed = 0;
    for (auto _ : state) {
        IQBurst b = synth_burst(specs[1], static_cast<std::size_t>(state.range(0)), 4, seed++);
        benchmark::DoNotOptimize(b.samples.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 4);
}
BENCHMARK(BM_SynthBurst)->Arg(64)->Arg(256)->Arg(1024);

void BM_AddAwgn(benchmark::State& state) {
    const auto specs = population_preset("four-emitters-easy");
    IQBurst clean = synth_burst(specs[0], static_cast<std::size_t>(state.range(0)), 4, 1);
    std::uint64_t seed = 0;
    for (auto _ : state) {
        IQBurst b = add_awgn(clean, 10.0, seed++);
        benchmark::DoNotOptimize(b.samples.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 4);
}
BENCHMARK(BM_AddAwgn)->Arg(64)->Arg(1024);

void BM_SynthDataset(benchmark::State& state) {
    const auto specs = population_preset("four-emitters-easy");
    for (auto _ : state) {
        LabeledDataset ds =
            synth_dataset(specs, static_cast<std::size_t>(state.range(0)), 20.0, 7);
        benchmark::DoNotOptimize(ds.bursts.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 4);
}
BENCHMARK(BM_SynthDataset)->Arg(25)->Arg(100);

}  // namespace
