#include <benchmark/benchmark.h>

#include "kgtod/common.hpp"
#include "kgtod/metrics.hpp"

namespace {

std::vector<std::string> sample_texts(int n, int words, std::uint64_t seed) {
    static const char* vocab[] = {"the", "a", "restaurant", "rating", "city", "found",
                                  "how", "about", "golden", "dragon", "is", "famous",
                                  "it", "was", "established", "in", "1987", ".", "?", ","};
    kgtod::Rng rng(seed);
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) {
        std::string t;
        for (int w = 0; w < words; ++w) {
            if (w) t += ' ';
            t += vocab[rng.uniform(std::size(vocab))];
        }
        out.push_back(std::move(t));
    }
    return out;
}

void BM_Bleu4Corpus(benchmark::State& state) {
    const int pairs = static_cast<int>(state.range(0));
    const auto refs = sample_texts(pairs, 18, 1);
    auto cands = sample_texts(pairs, 16, 2);
    for (int i = 0; i < pairs; i += 3) cands[i] = refs[i];  // some exact matches
    for (auto _ : state) {
        auto v = kgtod::metrics::bleu4(cands, refs);
        benchmark::DoNotOptimize(v);
    }
    state.SetItemsProcessed(state.iterations() * pairs);
}

void BM_ActSlotF1(benchmark::State& state) {
    const int turns = static_cast<int>(state.range(0));
    kgtod::Rng rng(3);
    std::vector<std::vector<kgtod::DialogAct>> preds, golds;
    for (int i = 0; i < turns; ++i) {
        std::vector<kgtod::DialogAct> acts;
        for (int a = 0; a < 3; ++a) {
            acts.emplace_back("INFORM", "slot" + std::to_string(rng.uniform(6)));
        }
        golds.push_back(acts);
        if (rng.bernoulli(0.5)) acts.pop_back();
        preds.push_back(std::move(acts));
    }
    for (auto _ : state) {
        auto v = kgtod::metrics::act_slot_f1(preds, golds);
        benchmark::DoNotOptimize(v);
    }
    state.SetItemsProcessed(state.iterations() * turns);
}

}  // namespace

BENCHMARK(BM_Bleu4Corpus)->Arg(200)->Arg(2000);
BENCHMARK(BM_ActSlotF1)->Arg(1000);
