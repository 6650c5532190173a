#include "kgtod/select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "kgtod/retrieval.hpp"

namespace kgtod::sel {

using nlohmann::json;

std::string RankContext::window_text() const {
    std::string out;
    const std::size_t n = utterances.size();
    const std::size_t first = window > 0 && static_cast<std::size_t>(window) < n
                                  ? n - static_cast<std::size_t>(window)
                                  : 0;
    for (std::size_t i = first; i < n; ++i) {
        if (!out.empty()) out += ' ';
        out += utterances[i];
    }
    return out;
}

namespace {

std::map<std::string, int> counts_of(std::string_view text) {
    std::map<std::string, int> counts;
    for (const auto& t : ir::index_terms(text)) ++counts[t];
    return counts;
}

// tf-idf cosine between the context window and one snippet, document
// statistics over the candidate pool (each snippet is one document).
// Unlike the corpus index this uses a strictly positive smoothed idf,
// log(1 + (N - n_t + 0.5)/(n_t + 0.5)), so tiny pools stay discriminative.
double pool_cosine(const std::string& context_text, const KnowledgeSnippet& candidate,
                   const std::vector<KnowledgeSnippet>& pool) {
    std::map<std::string, int> df;
    for (const auto& s : pool) {
        std::set<std::string> seen;
        for (const auto& t : ir::index_terms(s.text)) seen.insert(t);
        for (const auto& t : seen) ++df[t];
    }
    const double n = static_cast<double>(pool.size());
    auto idf = [&](const std::string& term) {
        auto it = df.find(term);
        const double n_t = it == df.end() ? 0.0 : static_cast<double>(it->second);
        return std::log1p((n - n_t + 0.5) / (n_t + 0.5));
    };
    const auto qc = counts_of(context_text);
    const auto dc = counts_of(candidate.text);
    double dot = 0.0, qnorm = 0.0, dnorm = 0.0;
    for (const auto& [term, count] : qc) {
        const double w = (1.0 + std::log(static_cast<double>(count))) * idf(term);
        qnorm += w * w;
    }
    for (const auto& [term, count] : dc) {
        const double w = (1.0 + std::log(static_cast<double>(count))) * idf(term);
        dnorm += w * w;
        auto it = qc.find(term);
        if (it != qc.end()) {
            const double qw = (1.0 + std::log(static_cast<double>(it->second))) * idf(term);
            dot += qw * w;
        }
    }
    if (qnorm <= 0.0 || dnorm <= 0.0) return 0.0;
    return dot / (std::sqrt(qnorm) * std::sqrt(dnorm));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::array<double, kFeatureCount> snippet_features(const RankContext& context,
                                                   const KnowledgeSnippet& candidate,
                                                   const std::vector<KnowledgeSnippet>& pool) {
    const std::string ctx = context.window_text();
    std::set<std::string> ctx_terms;
    for (const auto& t : tokenize(ctx)) ctx_terms.insert(to_lower(t));
    std::set<std::string> snip_terms;
    for (const auto& t : tokenize(candidate.text)) snip_terms.insert(to_lower(t));
    double overlap = 0.0;
    for (const auto& t : ctx_terms) {
        if (snip_terms.count(t)) overlap += 1.0;
    }
    const double cosine = pool_cosine(ctx, candidate, pool);
    const double length = static_cast<double>(tokenize(candidate.text).size());
    double mention = 0.0;
    const std::string norm_text = normalize_value(candidate.text);
    for (const auto& name : context.entity_names) {
        if (norm_text.find(normalize_value(name)) != std::string::npos) {
            mention = 1.0;
            break;
        }
    }
    return {overlap, cosine, length, mention};
}

std::vector<RankedSnippet> rank(const RankerModel& model, const RankContext& context,
                                const std::vector<KnowledgeSnippet>& candidates) {
    if (candidates.empty()) throw ContractError("rank: empty candidate list");
    std::vector<RankedSnippet> out;
    out.reserve(candidates.size());
    if (model.kind == RankerKind::kLexical) {
        const std::string ctx = context.window_text();
        for (const auto& c : candidates) {
            out.push_back(RankedSnippet{c, pool_cosine(ctx, c, candidates)});
        }
    } else {
        if (model.weights.size() != kFeatureCount) {
            throw ContractError("rank: trained model has no parameters");
        }
        for (const auto& c : candidates) {
            const auto f = snippet_features(context, c, candidates);
            double z = model.bias;
            for (int i = 0; i < kFeatureCount; ++i) {
                const double mean = i < static_cast<int>(model.feature_mean.size())
                                        ? model.feature_mean[i]
                                        : 0.0;
                const double sd = i < static_cast<int>(model.feature_std.size())
                                      ? model.feature_std[i]
                                      : 1.0;
                z += model.weights[i] * ((f[i] - mean) / (sd > 0.0 ? sd : 1.0));
            }
            out.push_back(RankedSnippet{c, sigmoid(z)});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const RankedSnippet& a, const RankedSnippet& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.snippet.id < b.snippet.id;
    });
    return out;
}

std::vector<KnowledgeSnippet> select_top(const std::vector<RankedSnippet>& ranked, int k) {
    std::vector<KnowledgeSnippet> out;
    const std::size_t n = std::min<std::size_t>(ranked.size(), k < 0 ? 0 : k);
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(ranked[i].snippet);
    return out;
}

double ranker_loss(const RankerModel& model,
                   const std::vector<std::array<double, kFeatureCount>>& x,
                   const std::vector<int>& y, double l2) {
    const std::size_t n = x.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double z = model.bias;
        for (int j = 0; j < kFeatureCount; ++j) z += model.weights[j] * x[i][j];
        // numerically stable log(1 + exp(.))
        const double t = y[i] ? -z : z;
        loss += t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    }
    loss /= static_cast<double>(n);
    for (int j = 0; j < kFeatureCount; ++j) loss += 0.5 * l2 * model.weights[j] * model.weights[j];
    return loss;
}

void ranker_gradient(const RankerModel& model,
                     const std::vector<std::array<double, kFeatureCount>>& x,
                     const std::vector<int>& y, double l2, std::vector<double>& grad_w,
                     double& grad_b) {
    const std::size_t n = x.size();
    grad_w.assign(kFeatureCount, 0.0);
    grad_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double z = model.bias;
        for (int j = 0; j < kFeatureCount; ++j) z += model.weights[j] * x[i][j];
        const double err = sigmoid(z) - static_cast<double>(y[i]);
        for (int j = 0; j < kFeatureCount; ++j) grad_w[j] += err * x[i][j];
        grad_b += err;
    }
    for (int j = 0; j < kFeatureCount; ++j) {
        grad_w[j] = grad_w[j] / static_cast<double>(n) + l2 * model.weights[j];
    }
    grad_b /= static_cast<double>(n);
}

RankerModel train_ranker(const std::vector<TrainExample>& examples, const TrainConfig& config,
                         std::vector<double>* loss_history) {
    if (examples.empty()) throw TrainingError("train_ranker: no examples");
    bool has_pos = false, has_neg = false;
    for (const auto& e : examples) (e.positive ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) {
        throw TrainingError("train_ranker: both classes must be present");
    }

    std::vector<std::array<double, kFeatureCount>> x;
    std::vector<int> y;
    x.reserve(examples.size());
    for (const auto& e : examples) {
        x.push_back(snippet_features(e.context, e.candidate, e.pool));
        y.push_back(e.positive ? 1 : 0);
    }
    // standardize features
    std::vector<double> mean(kFeatureCount, 0.0), sd(kFeatureCount, 0.0);
    for (const auto& f : x) {
        for (int j = 0; j < kFeatureCount; ++j) mean[j] += f[j];
    }
    for (int j = 0; j < kFeatureCount; ++j) mean[j] /= static_cast<double>(x.size());
    for (const auto& f : x) {
        for (int j = 0; j < kFeatureCount; ++j) sd[j] += (f[j] - mean[j]) * (f[j] - mean[j]);
    }
    for (int j = 0; j < kFeatureCount; ++j) {
        sd[j] = std::sqrt(sd[j] / static_cast<double>(x.size()));
        if (sd[j] <= 0.0) sd[j] = 1.0;
    }
    for (auto& f : x) {
        for (int j = 0; j < kFeatureCount; ++j) f[j] = (f[j] - mean[j]) / sd[j];
    }

    RankerModel model;
    model.kind = RankerKind::kTrained;
    model.weights.assign(kFeatureCount, 0.0);
    model.bias = 0.0;
    model.feature_mean = mean;
    model.feature_std = sd;

    double lr = config.learning_rate;
    double loss = ranker_loss(model, x, y, config.l2);
    if (loss_history) loss_history->push_back(loss);
    std::vector<double> gw;
    double gb = 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        ranker_gradient(model, x, y, config.l2, gw, gb);
        // halving step guarantees a non-increasing loss history
        for (;;) {
            RankerModel trial = model;
            for (int j = 0; j < kFeatureCount; ++j) trial.weights[j] -= lr * gw[j];
            trial.bias -= lr * gb;
            const double trial_loss = ranker_loss(trial, x, y, config.l2);
            if (trial_loss <= loss || lr < 1e-12) {
                model = std::move(trial);
                loss = trial_loss;
                break;
            }
            lr *= 0.5;
        }
        if (loss_history) loss_history->push_back(loss);
    }
    return model;
}

void RankerModel::save(const std::string& path) const {
    json j;
    j["format"] = "kgtod-ranker";
    j["version"] = 1;
    j["kind"] = kind == RankerKind::kLexical ? "lexical" : "trained";
    if (kind == RankerKind::kTrained) {
        j["features"] = kFeatureNames;
        j["weights"] = weights;
        j["bias"] = bias;
        j["feature_mean"] = feature_mean;
        j["feature_std"] = feature_std;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write ranker file: " + path);
    out << j.dump(2) << "\n";
}

RankerModel RankerModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open ranker file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("malformed ranker file " + path + ": " + e.what(), e.byte);
    }
    if (j.value("format", "") != "kgtod-ranker") {
        throw ValidationError("not a ranker file: " + path);
    }
    RankerModel m;
    const std::string kind = j.value("kind", "lexical");
    if (kind == "lexical") {
        m.kind = RankerKind::kLexical;
    } else if (kind == "trained") {
        m.kind = RankerKind::kTrained;
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
        m.feature_mean = j.value("feature_mean", std::vector<double>{});
        m.feature_std = j.value("feature_std", std::vector<double>{});
        if (m.weights.size() != kFeatureCount) {
            throw ValidationError("ranker file has wrong weight count: " + path);
        }
        for (double w : m.weights) {
            if (!std::isfinite(w)) throw ValidationError("non-finite ranker weight in " + path);
        }
    } else {
        throw ValidationError("unknown ranker kind '" + kind + "' in " + path);
    }
    return m;
}

}  // namespace kgtod::sel
