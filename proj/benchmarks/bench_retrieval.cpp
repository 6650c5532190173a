#include <benchmark/benchmark.h>

#include "kgtod/common.hpp"
#include "kgtod/retrieval.hpp"

namespace {

std::vector<kgtod::ir::Article> sample_corpus(int n_articles) {
    kgtod::Rng rng(11);
    std::vector<kgtod::ir::Article> corpus;
    for (int i = 0; i < n_articles; ++i) {
        kgtod::ir::Article a;
        a.title = "article " + std::to_string(i);
        std::string text = "Entry";
        for (int w = 0; w < 60; ++w) text += " w" + std::to_string(rng.uniform(2000));
        text += ".";
        a.paragraphs = {text, text};
        corpus.push_back(std::move(a));
    }
    return corpus;
}

void BM_IndexBuild(benchmark::State& state) {
    const auto corpus = sample_corpus(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto idx = kgtod::ir::CorpusIndex::build(corpus);
        benchmark::DoNotOptimize(idx.size());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Retrieve(benchmark::State& state) {
    const auto idx = kgtod::ir::CorpusIndex::build(sample_corpus(500));
    kgtod::Rng rng(5);
    for (auto _ : state) {
        const kgtod::Entity e{"w" + std::to_string(rng.uniform(2000)) + " w" +
                                  std::to_string(rng.uniform(2000)),
                              "places"};
        auto hits = idx.retrieve(e);
        benchmark::DoNotOptimize(hits);
    }
}

}  // namespace

BENCHMARK(BM_IndexBuild)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Retrieve);
