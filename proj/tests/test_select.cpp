#include <doctest.h>

#include <cmath>

#include "helpers/oracles.hpp"
#include "kgtod/select.hpp"

using namespace kgtod;
using namespace kgtod::sel;

namespace {

KnowledgeSnippet snip(const std::string& id, const std::string& text) {
    KnowledgeSnippet s;
    s.id = id;
    s.text = text;
    return s;
}

RankContext ctx_of(std::vector<std::string> utterances) {
    RankContext c;
    c.utterances = std::move(utterances);
    return c;
}

}  // namespace

TEST_CASE("lexical ranking extremes and tie-breaks") {
    const RankContext ctx = ctx_of({"older turn here", "the golden dragon serves dumplings"});
    SUBCASE("identical text outranks disjoint text") {
        const std::vector<KnowledgeSnippet> cands = {
            snip("b", "completely unrelated words about nothing"),
            snip("a", "the golden dragon serves dumplings"),
        };
        const auto ranked = rank(RankerModel::lexical(), ctx, cands);
        REQUIRE(ranked.size() == 2);
        CHECK(ranked[0].snippet.id == "a");
        CHECK(ranked[0].score > ranked[1].score);
    }
    SUBCASE("all-zero scores fall back to id order") {
        const std::vector<KnowledgeSnippet> cands = {
            snip("zz", "qqq www eee"),
            snip("aa", "rrr ttt yyy"),
            snip("mm", "uuu iii ooo"),
        };
        const auto ranked = rank(RankerModel::lexical(), ctx, cands);
        REQUIRE(ranked.size() == 3);
        CHECK(ranked[0].score == 0.0);
        CHECK(ranked[0].snippet.id == "aa");
        CHECK(ranked[1].snippet.id == "mm");
        CHECK(ranked[2].snippet.id == "zz");
    }
    SUBCASE("empty candidates is a contract error") {
        CHECK_THROWS_AS(rank(RankerModel::lexical(), ctx, {}), ContractError);
    }
}

TEST_CASE("lexical scores equal the brute-force pool cosine") {
    const RankContext ctx =
        ctx_of({"ignored oldest", "i want a chinese place", "which city do you prefer ?"});
    const std::vector<KnowledgeSnippet> cands = {
        snip("k1", "Golden dragon is a chinese restaurant in oslo."),
        snip("k2", "It was established in 1987."),
        snip("k3", "The city of oslo has a harbor."),
        snip("k4", "Dumplings are its famous dish."),
        snip("k5", "A guide lists restaurants by rating."),
    };
    // oracle: documents = candidate pool, query = last `window` utterances
    oracle::TfidfOracle bf;
    bf.selection_idf = true;
    for (const auto& c : cands) bf.add_doc(c.text);
    const std::string query = ctx.utterances[1] + " " + ctx.utterances[2];

    const auto ranked = rank(RankerModel::lexical(), ctx, cands);
    for (const auto& r : ranked) {
        int doc = -1;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            if (cands[i].id == r.snippet.id) doc = int(i);
        }
        REQUIRE(doc >= 0);
        CHECK(r.score == doctest::Approx(bf.cosine(query, doc)).epsilon(1e-9));
    }
    // ordering equals the oracle's
    std::vector<std::pair<double, std::string>> expected;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        expected.push_back({bf.cosine(query, int(i)), cands[i].id});
    }
    std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        CHECK(ranked[i].snippet.id == expected[i].second);
    }
}

TEST_CASE("select_top") {
    const RankContext ctx = ctx_of({"anything"});
    std::vector<RankedSnippet> ranked;
    for (int i = 0; i < 5; ++i) {
        ranked.push_back(RankedSnippet{snip("k" + std::to_string(i), "t"), 5.0 - i});
    }
    SUBCASE("5 ranked -> first 3") {
        const auto top = select_top(ranked);
        REQUIRE(top.size() == 3);
        CHECK(top[0].id == "k0");
        CHECK(top[2].id == "k2");
    }
    SUBCASE("2 ranked, k=3 -> both") {
        ranked.resize(2);
        CHECK(select_top(ranked).size() == 2);
    }
}

TEST_CASE("rank is invariant under candidate permutation") {
    Rng rng(3);
    const RankContext ctx = ctx_of({"words about dragons and cities"});
    std::vector<KnowledgeSnippet> cands;
    for (int i = 0; i < 8; ++i) {
        cands.push_back(snip("k" + std::to_string(i),
                             std::string(i % 2 ? "dragons breathe fire" : "cities have streets") +
                                 " variant " + std::to_string(i)));
    }
    const auto base = rank(RankerModel::lexical(), ctx, cands);
    for (int t = 0; t < 10; ++t) {
        auto shuffled = cands;
        rng.shuffle(shuffled);
        const auto r = rank(RankerModel::lexical(), ctx, shuffled);
        REQUIRE(r.size() == base.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            CHECK(r[i].snippet.id == base[i].snippet.id);
        }
    }
}

TEST_CASE("duplicated candidate text gets equal scores") {
    const RankContext ctx = ctx_of({"shared words appear here"});
    const std::vector<KnowledgeSnippet> cands = {
        snip("a", "shared words in a snippet"),
        snip("b", "shared words in a snippet"),
        snip("c", "totally different content block"),
    };
    const auto ranked = rank(RankerModel::lexical(), ctx, cands);
    REQUIRE(ranked.size() == 3);
    CHECK(ranked[0].score == ranked[1].score);
    CHECK(ranked[0].snippet.id == "a");  // id tie-break
}

namespace {

std::vector<TrainExample> toy_training_set(bool separable) {
    // positives mention the entity and are short; negatives are longer
    std::vector<TrainExample> out;
    std::vector<KnowledgeSnippet> pool = {
        snip("p1", "Golden dragon opened in 1987."),
        snip("p2", "Golden dragon offers a rating of 5."),
        snip("n1", "A very long description about streets and cities and nothing else at all."),
        snip("n2", "Another long and winding text about guides and ratings and towns nearby."),
    };
    RankContext ctx = ctx_of({"please recommend one with a good rating"});
    ctx.entity_names = {"golden dragon"};
    for (int rep = 0; rep < 4; ++rep) {
        for (const auto& s : pool) {
            TrainExample e;
            e.context = ctx;
            e.candidate = s;
            e.pool = pool;
            e.positive = s.id[0] == 'p';
            if (!separable && rep == 3 && s.id == "n1") e.positive = true;  // label noise
            out.push_back(std::move(e));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("train_ranker") {
    SUBCASE("separable toy set reaches training accuracy 1.0") {
        const auto examples = toy_training_set(true);
        TrainConfig cfg;
        const auto model = train_ranker(examples, cfg);
        int correct = 0;
        for (const auto& e : examples) {
            const auto f = snippet_features(e.context, e.candidate, e.pool);
            double z = model.bias;
            for (int j = 0; j < kFeatureCount; ++j) {
                z += model.weights[j] * (f[j] - model.feature_mean[j]) / model.feature_std[j];
            }
            correct += (z > 0.0) == e.positive;
        }
        CHECK(correct == int(examples.size()));
    }
    SUBCASE("loss history is non-increasing") {
        std::vector<double> losses;
        TrainConfig cfg;
        train_ranker(toy_training_set(false), cfg, &losses);
        REQUIRE(losses.size() >= 2);
        for (std::size_t i = 1; i < losses.size(); ++i) {
            CHECK(losses[i] <= losses[i - 1] + 1e-12);
        }
    }
    SUBCASE("equal seeds give identical parameters") {
        TrainConfig cfg;
        cfg.seed = 42;
        const auto m1 = train_ranker(toy_training_set(true), cfg);
        const auto m2 = train_ranker(toy_training_set(true), cfg);
        CHECK(m1.weights == m2.weights);
        CHECK(m1.bias == m2.bias);
    }
    SUBCASE("single-class data is a training error") {
        auto examples = toy_training_set(true);
        for (auto& e : examples) e.positive = true;
        CHECK_THROWS_AS(train_ranker(examples, TrainConfig{}), TrainingError);
    }
}

TEST_CASE("analytic gradient matches central finite differences") {
    const auto examples = toy_training_set(false);
    std::vector<std::array<double, kFeatureCount>> x;
    std::vector<int> y;
    for (const auto& e : examples) {
        x.push_back(snippet_features(e.context, e.candidate, e.pool));
        y.push_back(e.positive ? 1 : 0);
    }
    RankerModel m;
    m.kind = RankerKind::kTrained;
    m.weights = {0.3, -0.2, 0.05, 0.7};
    m.bias = -0.1;
    const double l2 = 1e-3;

    std::vector<double> grad_w;
    double grad_b = 0.0;
    ranker_gradient(m, x, y, l2, grad_w, grad_b);

    const double h = 1e-6;
    auto loss_at = [&](RankerModel mm) { return ranker_loss(mm, x, y, l2); };
    for (int j = 0; j < kFeatureCount; ++j) {
        RankerModel up = m, dn = m;
        up.weights[j] += h;
        dn.weights[j] -= h;
        const double numeric = (loss_at(up) - loss_at(dn)) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(grad_w[j]), 1e-10});
        CHECK(std::abs(numeric - grad_w[j]) / denom < 1e-6);
    }
    RankerModel up = m, dn = m;
    up.bias += h;
    dn.bias -= h;
    const double numeric_b = (loss_at(up) - loss_at(dn)) / (2 * h);
    const double denom_b = std::max({std::abs(numeric_b), std::abs(grad_b), 1e-10});
    CHECK(std::abs(numeric_b - grad_b) / denom_b < 1e-6);
}

TEST_CASE("ranker model JSON round trip") {
    TrainConfig cfg;
    const auto model = train_ranker(toy_training_set(true), cfg);
    const std::string path = "/tmp/kgtod_test_ranker.json";
    model.save(path);
    const auto loaded = RankerModel::load(path);
    CHECK(loaded.kind == RankerKind::kTrained);
    CHECK(loaded.weights == model.weights);
    CHECK(loaded.bias == model.bias);
    CHECK(loaded.feature_mean == model.feature_mean);

    RankerModel lex = RankerModel::lexical();
    lex.save(path);
    CHECK(RankerModel::load(path).kind == RankerKind::kLexical);
}
