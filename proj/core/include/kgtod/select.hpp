#pragma once
// Knowledge selection: rank a dialogue's candidate snippets for chit-chat
// enrichment, take the top 3. One interface, two rankers: a lexical
// tf-idf matcher and a logistic scorer over lexical-overlap features.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "kgtod/data.hpp"

namespace kgtod::sel {

struct RankedSnippet {
    KnowledgeSnippet snippet;
    double score = 0.0;
};

enum class RankerKind { kLexical, kTrained };

// Feature order is part of the serialized model contract.
inline constexpr int kFeatureCount = 4;
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "term_overlap", "tfidf_cosine", "snippet_length", "entity_mention"};

struct RankerModel {
    RankerKind kind = RankerKind::kLexical;
    // Trained kind only: logistic weights over standardized features + bias.
    std::vector<double> weights;       // kFeatureCount entries
    double bias = 0.0;
    std::vector<double> feature_mean;  // standardization, from training data
    std::vector<double> feature_std;

    static RankerModel lexical() { return RankerModel{}; }
    void save(const std::string& path) const;
    static RankerModel load(const std::string& path);
};

// How much dialogue history feeds the scorer: the last `window` utterances
// (default: last user + last system turn).
struct RankContext {
    std::vector<std::string> utterances;  // oldest first
    int window = 2;
    std::vector<std::string> entity_names;  // for the entity-mention feature

    std::string window_text() const;
};

std::array<double, kFeatureCount> snippet_features(const RankContext& context,
                                                   const KnowledgeSnippet& candidate,
                                                   const std::vector<KnowledgeSnippet>& pool);

// Sorted non-increasing by score, ties broken by snippet id. The lexical
// score is the tf-idf cosine between the context window and the snippet
// text, with document statistics taken over the candidate pool.
// Throws ContractError on an empty candidate list.
std::vector<RankedSnippet> rank(const RankerModel& model, const RankContext& context,
                                const std::vector<KnowledgeSnippet>& candidates);

std::vector<KnowledgeSnippet> select_top(const std::vector<RankedSnippet>& ranked, int k = 3);

struct TrainExample {
    RankContext context;
    KnowledgeSnippet candidate;
    std::vector<KnowledgeSnippet> pool;  // candidate set the example came from
    bool positive = false;
};

struct TrainConfig {
    int epochs = 200;
    double learning_rate = 0.5;
    double l2 = 1e-4;
    std::uint64_t seed = 1;
};

// Regularized logistic regression by full-batch gradient descent with a
// halving step on non-decrease, so the loss history is non-increasing.
// Throws TrainingError when only one class is present.
RankerModel train_ranker(const std::vector<TrainExample>& examples, const TrainConfig& config,
                         std::vector<double>* loss_history = nullptr);

// Mean negative log-likelihood plus L2 penalty at the given parameters.
double ranker_loss(const RankerModel& model, const std::vector<std::array<double, kFeatureCount>>& x,
                   const std::vector<int>& y, double l2);

// Analytic gradient of ranker_loss with respect to (weights, bias).
void ranker_gradient(const RankerModel& model,
                     const std::vector<std::array<double, kFeatureCount>>& x,
                     const std::vector<int>& y, double l2, std::vector<double>& grad_w,
                     double& grad_b);

}  // namespace kgtod::sel
