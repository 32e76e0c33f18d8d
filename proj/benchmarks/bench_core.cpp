#include <benchmark/benchmark.h>

#include "agg/model.hpp"
#include "agg/pipeline.hpp"
#include "agg/tape.hpp"

#include <algorithm>

using namespace agg;

namespace {

ChannelSchema bench_schema(std::int64_t channels) {
    ChannelSchema s;
    s.discrete_names = {"channel"};
    s.vocabularies.push_back({});
    for (std::int64_t i = 0; i < channels; ++i) s.vocabularies[0].push_back("ch" + std::to_string(i));
    s.continuous_names = {"shift", "gain"};
    s.measurement_names = {"y"};
    return s;
}

Sample bench_sample(std::int64_t n_nodes, std::int64_t channels) {
    Rng rng(1);
    Sample s;
    for (std::int64_t i = 0; i < n_nodes; ++i) {
        Observation obs;
        obs.t = static_cast<double>(i);
        obs.y = {rng.uniform(-1.0, 1.0)};
        obs.c_disc = {rng.uniform_int(channels)};
        obs.c_cont = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        s.inputs.push_back(std::move(obs));
    }
    s.tau_g = 3.0;
    s.target_channel = ChannelSpec{{0}, {0.0, 1.0}};
    s.y_true = {0.0};
    return s;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::int64_t>(state.range(0));
    Rng rng(2);
    Tensor a({n, n}), b({n, n});
    for (auto& x : a.values()) x = rng.uniform(-1.0, 1.0);
    for (auto& x : b.values()) x = rng.uniform(-1.0, 1.0);
    for (auto _ : state) {
        Tensor c = matmul_plain(a, b);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_ForwardImpute(benchmark::State& state) {
    const auto L = static_cast<std::int64_t>(state.range(0));
    ChannelSchema schema = bench_schema(4);
    ModelConfig cfg;
    cfg.feature_width = 4;
    cfg.heads = 4;
    cfg.encoder_layers = 2;
    cfg.context_length = L;
    cfg.dropout = 0.0;
    AggModel model(cfg, schema, 3);
    Sample s = bench_sample(L, 4);
    for (auto _ : state) {
        Tensor out = model.forward_impute(s, nullptr, false);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_ForwardImpute)->Arg(16)->Arg(32)->Arg(100);

void BM_ForwardBackward(benchmark::State& state) {
    const auto L = static_cast<std::int64_t>(state.range(0));
    ChannelSchema schema = bench_schema(4);
    ModelConfig cfg;
    cfg.feature_width = 4;
    cfg.heads = 4;
    cfg.encoder_layers = 2;
    cfg.context_length = L;
    cfg.dropout = 0.0;
    AggModel model(cfg, schema, 4);
    Sample s = bench_sample(L, 4);
    GradientBuffer grads(model.params());
    for (auto _ : state) {
        grads.zero();
        Tape tape(&model.params());
        Value out = model.forward_nodes(tape, s, nullptr, false);
        Value diff = tape.sub(out, tape.constant(Tensor::vector(s.y_true)));
        Value loss = tape.mean_all(tape.mul(diff, diff));
        tape.backward(loss, grads);
        benchmark::DoNotOptimize(grads.grad(0).data());
    }
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(32)->Arg(100);

void BM_BuildSamples(benchmark::State& state) {
    Rng rng(5);
    std::vector<Observation> inputs;
    for (std::int64_t i = 0; i < 5000; ++i) {
        Observation o;
        o.t = static_cast<double>(i) + rng.uniform(0.0, 0.5);
        o.c_disc = {rng.uniform_int(4)};
        o.y = {rng.uniform(-1.0, 1.0)};
        o.source_index = i;
        inputs.push_back(o);
    }
    std::vector<Observation> targets(inputs.begin(), inputs.begin() + 500);
    PipelineConfig cfg;
    cfg.context_length = 100;
    cfg.stride = static_cast<std::int64_t>(state.range(0));
    for (auto _ : state) {
        auto samples = build_samples(inputs, targets, cfg);
        benchmark::DoNotOptimize(samples.data());
    }
}
BENCHMARK(BM_BuildSamples)->Arg(100)->Arg(10);

} // namespace

BENCHMARK_MAIN();
