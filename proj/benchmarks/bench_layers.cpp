#include <benchmark/benchmark.h>

#include "rffkit/layers.hpp"
#include "rffkit/model.hpp"
#include "rffkit/rng.hpp"

using namespace rffkit;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.normal(0.0, 1.0);
    return t;
}

void BM_LinearForward(benchmark::State& state) {
    Rng rng(1);
    Layer lin = make_layer(LayerSpec::make_linear(512, 512), rng);
    Tensor in = random_tensor({static_cast<std::size_t>(state.range(0)), 512}, 2);
    for (auto _ : state) {
        Tensor out = layer_forward(lin, in, Mode::eval, nullptr);
        benchmark::DoNotOptimize(out.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LinearForward)->Arg(64)->Arg(256)->Arg(512);

void BM_LinearBackward(benchmark::State& state) {
    Rng rng(1);
    Layer lin = make_layer(LayerSpec::make_linear(512, 512), rng);
    Tensor in = random_tensor({static_cast<std::size_t>(state.range(0)), 512}, 2);
    LayerCache cache;
    Tensor out = layer_forward(lin, in, Mode::train, &cache);
    Tensor g = Tensor::full(out.shape, 1.0);
    for (auto _ : state) {
        Tensor gin = layer_backward(lin, cache, g);
        benchmark::DoNotOptimize(gin.data.data());
        for (auto& p : lin.params) p.zero_grad();
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LinearBackward)->Arg(64)->Arg(256);

void BM_Conv1dForward(benchmark::State& state) {
    Rng rng(1);
    Layer conv = make_layer(LayerSpec::make_conv1d(16, 32, 5, 1, 2), rng);
    Tensor in = random_tensor({static_cast<std::size_t>(state.range(0)), 16, 128}, 2);
    for (auto _ : state) {
        Tensor out = layer_forward(conv, in, Mode::eval, nullptr);
        benchmark::DoNotOptimize(out.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv1dForward)->Arg(16)->Arg(64);

void BM_FcnEmbedBatch(benchmark::State& state) {
    ModelSpec spec;
    spec.kind = ModelKind::FCN;
    spec.input_len = 256;
    spec.embed_dim = 64;
    Model m = build_model(spec, 3);
    Tensor in = random_tensor(input_shape(spec, static_cast<std::size_t>(state.range(0))), 5);
    for (auto _ : state) {
        Tensor z = embed(m, in, Mode::eval);
        benchmark::DoNotOptimize(z.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FcnEmbedBatch)->Arg(128)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
