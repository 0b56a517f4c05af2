#include <benchmark/benchmark.h>

#include "kbcin/model.hpp"
#include "kbcin/trainer.hpp"

using namespace kbcin;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.mutable_values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

void BM_linear_map(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Tensor x = random_tensor({8, n}, rng);
    const Tensor w = random_tensor({n, n}, rng);
    for (auto _ : state) {
        Tape tape;
        benchmark::DoNotOptimize(linear_map(tape, x, w));
    }
    state.SetItemsProcessed(state.iterations() * 8 * n * n);
}
BENCHMARK(BM_linear_map)->Arg(64)->Arg(300);

void BM_masked_softmax(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    const Tensor s = random_tensor({n}, rng);
    std::vector<std::uint8_t> mask(n, 1);
    for (auto _ : state) {
        Tape tape;
        benchmark::DoNotOptimize(masked_softmax(tape, s, mask));
    }
}
BENCHMARK(BM_masked_softmax)->Arg(8)->Arg(64);

struct ForwardFixture {
    Corpus corpus;
    KnowledgeStore store{64};
    KbcinModel model;
    std::vector<SampleInput> inputs;

    ForwardFixture() {
        SyntheticConfig gen;
        gen.n_dialogues = 8;
        gen.seed = 3;
        corpus = generate_synthetic(gen);
        store = synthesize_store(corpus, 64, 17);
        ModelConfig cfg;
        cfg.d_h = 300;
        cfg.n_heads = 2;
        model = KbcinModel::init(cfg, build_vocabulary(corpus), 1);
        for (const CEESample& s : build_samples(corpus)) {
            inputs.push_back(build_sample_input(corpus, s, store, model, nullptr));
        }
    }
};

void BM_model_forward(benchmark::State& state) {
    static ForwardFixture fx;
    std::size_t i = 0;
    for (auto _ : state) {
        Tape tape;
        benchmark::DoNotOptimize(
            model_forward(tape, fx.model, fx.inputs[i % fx.inputs.size()], false, nullptr));
        ++i;
    }
}
BENCHMARK(BM_model_forward);

void BM_forward_backward(benchmark::State& state) {
    static ForwardFixture fx;
    auto params = fx.model.named_params();
    std::size_t i = 0;
    for (auto _ : state) {
        Tape tape;
        const SampleInput& in = fx.inputs[i % fx.inputs.size()];
        const Tensor scores = model_forward(tape, fx.model, in, false, nullptr);
        const Tensor loss = bce_loss(tape, scores, in.labels);
        zero_all_grads(params);
        tape.backward(loss);
        ++i;
    }
}
BENCHMARK(BM_forward_backward);

}  // namespace

BENCHMARK_MAIN();
