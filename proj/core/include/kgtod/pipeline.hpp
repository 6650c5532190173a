#pragma once
// Inference engines for the three architectures (knowledge-free baseline,
// end-to-end knowledge-enriched model, TOD+response pipeline), the
// staged-oracle evaluation harness, and training-data construction.

#include <optional>
#include <string>
#include <vector>

#include "kgtod/data.hpp"
#include "kgtod/dataset.hpp"
#include "kgtod/lm.hpp"
#include "kgtod/metrics.hpp"
#include "kgtod/retrieval.hpp"
#include "kgtod/select.hpp"
#include "kgtod/seqfmt.hpp"

namespace kgtod::pipe {

enum class ArchKind { kBaseline, kPlus, kCombiner };

const char* arch_name(ArchKind kind);
ArchKind arch_from_name(const std::string& name);

// Trained model(s) backing one architecture. The pipeline architecture
// carries two checkpoints: a TOD model and a response model.
struct Architecture {
    ArchKind kind = ArchKind::kPlus;
    lm::Checkpoint model;
    std::optional<lm::Checkpoint> response_model;  // kCombiner only

    void validate() const;
};

// Oracle substitutions for staged ablations. Gold decision or knowledge
// implies gold TOD results (the ablations are nested).
struct StageSpec {
    bool use_gold_tod = false;
    bool use_gold_decision = false;
    bool use_gold_knowledge = false;

    void validate() const;
    std::string name() const;
};

struct Provenance {
    bool gold_tod = false;
    bool gold_decision = false;
    bool gold_knowledge = false;
};

struct TurnPrediction {
    BeliefState belief;
    std::vector<DialogAct> acts;
    seq::Decision decision = seq::Decision::kNochitchat;
    std::vector<std::string> selected_snippet_ids;
    std::string response;
    Provenance provenance;
    std::vector<std::string> warnings;
};

struct PipelineConfig {
    EntitySlotConfig entity_slots;
    sel::RankerModel ranker;           // lexical by default
    int context_token_budget = 512;
    int max_response_tokens = 96;
    int selection_window = 2;          // utterances fed to the ranker
};

// Runs the four-stage chain for one system turn with the given oracle
// substitutions. The dialogue prefix (gold context) is taken from the
// dialogue itself; the oracle database result is always the gold one.
TurnPrediction infer_turn(const Architecture& arch, const Dialogue& dialogue, int turn_index,
                          const StageSpec& stage, const ir::CorpusIndex* index,
                          const PipelineConfig& config);

struct EvalOutput {
    metrics::EvalReport report;
    std::vector<std::string> dump_lines;  // JSON-lines, one per system turn
};

// Predictions for every system turn using the gold dialogue context as
// history, aggregated into an EvalReport.
EvalOutput run_eval(const Architecture& arch, const std::vector<Dialogue>& dataset,
                    const StageSpec& stage, const ir::CorpusIndex* index,
                    const PipelineConfig& config);

struct TrainingData {
    std::vector<seq::TrainingSequence> main;      // baseline / plus / combiner TOD
    std::vector<seq::TrainingSequence> response;  // combiner response model stream
};

// Emits the correct sequence kind(s) per system turn. Knowledge segments
// carry the gold/ranked merge; non-enriched turns still carry the top 3
// ranker snippets.
TrainingData make_training_data(ArchKind kind, const std::vector<Dialogue>& dataset,
                                const PipelineConfig& config);

}  // namespace kgtod::pipe
