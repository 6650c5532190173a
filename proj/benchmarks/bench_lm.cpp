#include <benchmark/benchmark.h>

#include "kgtod/lm.hpp"

namespace {

using namespace kgtod;

lm::LmConfig bench_config() {
    lm::LmConfig c;
    c.n_layers = 2;
    c.d_model = 96;
    c.n_heads = 4;
    c.ctx_len = 256;
    return c;
}

void BM_LossAndGrad(benchmark::State& state) {
    const auto cfg = bench_config();
    const int vocab = 400;
    Rng rng(1);
    auto params = lm::init_params<float>(cfg, vocab, rng);
    lm::Batch batch;
    const int t_len = static_cast<int>(state.range(0));
    for (int b = 0; b < 16; ++b) {
        std::vector<int> ids = {1};
        for (int t = 1; t < t_len; ++t) ids.push_back(4 + int(rng.uniform(vocab - 4)));
        batch.seqs.push_back(std::move(ids));
    }
    lm::ParamsF grads;
    for (auto _ : state) {
        double loss = lm::loss_and_grad(cfg, params, batch, grads);
        benchmark::DoNotOptimize(loss);
    }
    state.SetItemsProcessed(state.iterations() * 16 * t_len);
}

void BM_GreedyDecode(benchmark::State& state) {
    const auto cfg = bench_config();
    const int vocab = 400;
    Rng rng(2);
    const auto params = lm::init_params<float>(cfg, vocab, rng);
    const auto v = lm::Vocab::build({});
    std::vector<int> prompt = {1};
    for (int t = 0; t < 40; ++t) prompt.push_back(4 + int(rng.uniform(20)));
    for (auto _ : state) {
        auto out = lm::decode_greedy(cfg, params, prompt, -1, 64);
        benchmark::DoNotOptimize(out);
    }
    state.SetItemsProcessed(state.iterations() * (40 + 64));
}

}  // namespace

BENCHMARK(BM_LossAndGrad)->Arg(128)->Arg(192)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);
