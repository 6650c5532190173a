#pragma once
// Automatic evaluation metrics: joint/average goal accuracy, act-slot F1,
// corpus-level BLEU-4 over the enriched/original/all turn subsets,
// knowledge selection recall and enrichment decision F1.

#include <optional>
#include <string>
#include <vector>

#include "kgtod/data.hpp"
#include "kgtod/seqfmt.hpp"

namespace kgtod::metrics {

// Fraction of turns whose predicted belief equals gold exactly, as a set
// of normalized (domain, slot, value) triples.
double joint_ga(const std::vector<BeliefState>& preds, const std::vector<BeliefState>& golds);

// Over all gold (domain, slot) entries pooled across turns, the fraction
// whose predicted value matches. Missing predictions count as wrong;
// spurious extra slots are ignored.
double avg_ga(const std::vector<BeliefState>& preds, const std::vector<BeliefState>& golds);

// Micro-averaged F1 between multisets of (act, slot) pairs pooled over all
// turns. with_values switches to (act, slot, value-list) triples.
double act_slot_f1(const std::vector<std::vector<DialogAct>>& preds,
                   const std::vector<std::vector<DialogAct>>& golds, bool with_values = false);

// Corpus-level BLEU-4: clipped n-gram counts pooled over all pairs,
// uniform-weight geometric mean of precisions n=1..4, brevity penalty.
// No smoothing; any zero pooled overlap gives 0. Empty input -> absent.
std::optional<double> bleu4(const std::vector<std::string>& candidates,
                            const std::vector<std::string>& references);

// Per enriched turn: |gold ∩ selected| / |gold|, averaged over turns.
// Throws ContractError if a turn carries no gold ids.
double selection_recall(const std::vector<std::vector<std::string>>& selected,
                        const std::vector<std::vector<std::string>>& gold_ids);

// Binary F1 with kChitchat as the positive class.
double decision_f1(const std::vector<seq::Decision>& preds,
                   const std::vector<seq::Decision>& golds);

struct EvalReport {
    std::string architecture;
    std::string stage;  // e.g. "end_to_end", "gold_tod", "all_oracle"
    double joint_ga = 0.0;
    double avg_ga = 0.0;
    double act_slot_f1 = 0.0;
    std::optional<double> bleu4_aug;
    std::optional<double> bleu4_orig;
    std::optional<double> bleu4_all;
    std::optional<double> selection_recall;
    double decision_f1 = 0.0;
    std::int64_t turns = 0;
    std::int64_t enriched_turns = 0;

    std::string to_json() const;
    static EvalReport from_json_file(const std::string& path);
    void save(const std::string& path) const;
};

// Aligned plain-text comparison, one row per report.
std::string render_report_table(const std::vector<EvalReport>& reports);

}  // namespace kgtod::metrics
