#include "kgtod/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace kgtod::metrics {

using nlohmann::json;

namespace {

void check_aligned(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ContractError(std::string(what) + ": prediction/gold length mismatch (" +
                            std::to_string(a) + " vs " + std::to_string(b) + ")");
    }
}

std::set<std::string> belief_triples(const BeliefState& b) {
    std::set<std::string> out;
    for (const auto& e : b.entries()) {
        out.insert(e.domain + '\x1f' + e.slot + '\x1f' + normalize_value(e.value));
    }
    return out;
}

}  // namespace

double joint_ga(const std::vector<BeliefState>& preds, const std::vector<BeliefState>& golds) {
    check_aligned(preds.size(), golds.size(), "joint_ga");
    if (golds.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        if (belief_triples(preds[i]) == belief_triples(golds[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(golds.size());
}

double avg_ga(const std::vector<BeliefState>& preds, const std::vector<BeliefState>& golds) {
    check_aligned(preds.size(), golds.size(), "avg_ga");
    std::int64_t total = 0, correct = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        for (const auto& e : golds[i].entries()) {
            ++total;
            const std::string* pv = preds[i].find(e.domain, e.slot);
            if (pv && normalize_value(*pv) == normalize_value(e.value)) ++correct;
        }
    }
    // no gold slots at all: vacuously perfect (keeps joint=1 => avg=1)
    if (total == 0) return golds.empty() ? 0.0 : 1.0;
    return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

std::multiset<std::string> act_keys(const std::vector<DialogAct>& acts, bool with_values) {
    std::multiset<std::string> out;
    for (const auto& a : acts) {
        std::string key = to_lower(a.act) + '\x1f' + (a.slot ? to_lower(*a.slot) : "");
        if (with_values) {
            for (const auto& v : a.values) key += '\x1f' + normalize_value(v);
        }
        out.insert(std::move(key));
    }
    return out;
}

}  // namespace

double act_slot_f1(const std::vector<std::vector<DialogAct>>& preds,
                   const std::vector<std::vector<DialogAct>>& golds, bool with_values) {
    check_aligned(preds.size(), golds.size(), "act_slot_f1");
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        auto p = act_keys(preds[i], with_values);
        auto g = act_keys(golds[i], with_values);
        for (const auto& key : p) {
            auto it = g.find(key);
            if (it != g.end()) {
                ++tp;
                g.erase(it);
            } else {
                ++fp;
            }
        }
        fn += static_cast<std::int64_t>(g.size());
    }
    const std::int64_t denom = 2 * tp + fp + fn;
    if (denom == 0) return preds.empty() ? 0.0 : 1.0;  // nothing predicted, nothing gold
    return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

namespace {

// n-gram key: tokens joined by \x1f
std::map<std::string, std::int64_t> ngram_counts(const std::vector<std::string>& toks, int n) {
    std::map<std::string, std::int64_t> counts;
    if (static_cast<int>(toks.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        std::string key = toks[i];
        for (int j = 1; j < n; ++j) key += '\x1f' + toks[i + j];
        ++counts[key];
    }
    return counts;
}

}  // namespace

std::optional<double> bleu4(const std::vector<std::string>& candidates,
                            const std::vector<std::string>& references) {
    check_aligned(candidates.size(), references.size(), "bleu4");
    if (candidates.empty()) return std::nullopt;

    std::array<std::int64_t, 4> overlap{}, total{};
    std::int64_t cand_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto cand = tokenize(candidates[i]);
        const auto ref = tokenize(references[i]);
        cand_len += static_cast<std::int64_t>(cand.size());
        ref_len += static_cast<std::int64_t>(ref.size());
        for (int n = 1; n <= 4; ++n) {
            const auto cc = ngram_counts(cand, n);
            const auto rc = ngram_counts(ref, n);
            for (const auto& [key, count] : cc) {
                total[n - 1] += count;
                auto it = rc.find(key);
                if (it != rc.end()) overlap[n - 1] += std::min(count, it->second);
            }
        }
    }
    for (int n = 0; n < 4; ++n) {
        if (overlap[n] == 0 || total[n] == 0) return 0.0;
    }
    double log_precision = 0.0;
    for (int n = 0; n < 4; ++n) {
        log_precision += std::log(static_cast<double>(overlap[n]) / static_cast<double>(total[n]));
    }
    double bp = 1.0;
    if (cand_len < ref_len) {
        if (cand_len == 0) return 0.0;
        bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    }
    return bp * std::exp(log_precision / 4.0);
}

double selection_recall(const std::vector<std::vector<std::string>>& selected,
                        const std::vector<std::vector<std::string>>& gold_ids) {
    check_aligned(selected.size(), gold_ids.size(), "selection_recall");
    if (gold_ids.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < gold_ids.size(); ++i) {
        if (gold_ids[i].empty()) {
            throw ContractError("selection_recall: turn " + std::to_string(i) +
                                " has no gold snippet ids");
        }
        const std::set<std::string> sel(selected[i].begin(), selected[i].end());
        std::size_t hit = 0;
        for (const auto& g : gold_ids[i]) {
            if (sel.count(g)) ++hit;
        }
        sum += static_cast<double>(hit) / static_cast<double>(gold_ids[i].size());
    }
    return sum / static_cast<double>(gold_ids.size());
}

double decision_f1(const std::vector<seq::Decision>& preds,
                   const std::vector<seq::Decision>& golds) {
    check_aligned(preds.size(), golds.size(), "decision_f1");
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        const bool p = preds[i] == seq::Decision::kChitchat;
        const bool g = golds[i] == seq::Decision::kChitchat;
        if (p && g) ++tp;
        if (p && !g) ++fp;
        if (!p && g) ++fn;
    }
    const std::int64_t denom = 2 * tp + fp + fn;
    if (denom == 0) return golds.empty() ? 0.0 : 1.0;  // no positives anywhere
    return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

namespace {

json opt_json(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

std::optional<double> opt_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

std::string EvalReport::to_json() const {
    json j;
    j["architecture"] = architecture;
    j["stage"] = stage;
    j["joint_ga"] = joint_ga;
    j["avg_ga"] = avg_ga;
    j["act_slot_f1"] = act_slot_f1;
    j["bleu4_aug"] = opt_json(bleu4_aug);
    j["bleu4_orig"] = opt_json(bleu4_orig);
    j["bleu4_all"] = opt_json(bleu4_all);
    j["selection_recall"] = opt_json(selection_recall);
    j["decision_f1"] = decision_f1;
    j["turns"] = turns;
    j["enriched_turns"] = enriched_turns;
    return j.dump(2);
}

void EvalReport::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write report file: " + path);
    out << to_json() << "\n";
}

EvalReport EvalReport::from_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open report file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("malformed report file " + path + ": " + e.what(), e.byte);
    }
    EvalReport r;
    r.architecture = j.value("architecture", "");
    r.stage = j.value("stage", "");
    r.joint_ga = j.value("joint_ga", 0.0);
    r.avg_ga = j.value("avg_ga", 0.0);
    r.act_slot_f1 = j.value("act_slot_f1", 0.0);
    r.bleu4_aug = opt_from(j, "bleu4_aug");
    r.bleu4_orig = opt_from(j, "bleu4_orig");
    r.bleu4_all = opt_from(j, "bleu4_all");
    r.selection_recall = opt_from(j, "selection_recall");
    r.decision_f1 = j.value("decision_f1", 0.0);
    r.turns = j.value("turns", 0);
    r.enriched_turns = j.value("enriched_turns", 0);
    return r;
}

std::string render_report_table(const std::vector<EvalReport>& reports) {
    std::ostringstream os;
    auto cell = [&](const std::string& s, std::size_t w) {
        os << s;
        for (std::size_t i = s.size(); i < w; ++i) os << ' ';
    };
    auto num = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(4);
        s << *v;
        return s.str();
    };
    cell("Model", 22);
    cell("Stage", 14);
    cell("Joint GA", 10);
    cell("Avg GA", 10);
    cell("Act-Slot F1", 13);
    cell("BLEU-4_aug", 12);
    cell("BLEU-4_orig", 13);
    cell("BLEU-4_all", 12);
    cell("Sel recall", 12);
    cell("Dec F1", 8);
    os << "\n";
    for (const auto& r : reports) {
        cell(r.architecture, 22);
        cell(r.stage, 14);
        cell(num(r.joint_ga), 10);
        cell(num(r.avg_ga), 10);
        cell(num(r.act_slot_f1), 13);
        cell(num(r.bleu4_aug), 12);
        cell(num(r.bleu4_orig), 13);
        cell(num(r.bleu4_all), 12);
        cell(num(r.selection_recall), 12);
        cell(num(r.decision_f1), 8);
        os << "\n";
    }
    return os.str();
}

}  // namespace kgtod::metrics
