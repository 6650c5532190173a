#include "kgtod/pipeline.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

namespace kgtod::pipe {

using nlohmann::json;

const char* arch_name(ArchKind kind) {
    switch (kind) {
        case ArchKind::kBaseline: return "baseline";
        case ArchKind::kPlus: return "plus";
        case ArchKind::kCombiner: return "combiner";
    }
    return "?";
}

ArchKind arch_from_name(const std::string& name) {
    if (name == "baseline") return ArchKind::kBaseline;
    if (name == "plus") return ArchKind::kPlus;
    if (name == "combiner") return ArchKind::kCombiner;
    throw ValidationError("unknown architecture '" + name + "'");
}

void Architecture::validate() const {
    if (kind == ArchKind::kCombiner && !response_model) {
        throw ConfigError("combiner architecture needs a response model checkpoint");
    }
    if (kind != ArchKind::kCombiner && response_model) {
        throw ConfigError("only the combiner architecture carries a response model");
    }
}

void StageSpec::validate() const {
    if ((use_gold_decision || use_gold_knowledge) && !use_gold_tod) {
        throw ConfigError("gold decision/knowledge oracles require gold TOD results");
    }
}

std::string StageSpec::name() const {
    if (use_gold_tod && use_gold_decision && use_gold_knowledge) return "all_oracle";
    std::string s = use_gold_tod ? "gold_tod" : "end_to_end";
    if (use_gold_decision) s += "+decision";
    if (use_gold_knowledge) s += "+knowledge";
    return s;
}

namespace {

std::vector<std::string> gold_context(const Dialogue& d, int turn_index) {
    std::vector<std::string> out;
    out.reserve(turn_index);
    for (int i = 0; i < turn_index; ++i) out.push_back(d.turns[i].final_utterance());
    return out;
}

// entities over the dialogue prefix plus the current (possibly generated)
// belief/acts, first-appearance order
std::vector<Entity> cumulative_entities(const Dialogue& d, int turn_index,
                                        const BeliefState& belief,
                                        const std::vector<DialogAct>& acts,
                                        const PipelineConfig& config) {
    const std::string domain = d.domains.empty() ? "" : d.domains.front();
    std::vector<Entity> all;
    std::set<std::pair<std::string, std::string>> seen;
    auto add_all = [&](const std::vector<Entity>& es) {
        for (const auto& e : es) {
            auto key = std::make_pair(normalize_value(e.name), e.domain);
            if (seen.insert(key).second) all.push_back(e);
        }
    };
    for (int i = 0; i < turn_index; ++i) {
        add_all(extract_entities(d.turns[i].belief, d.turns[i].acts, domain,
                                 config.entity_slots));
    }
    add_all(extract_entities(belief, acts, domain, config.entity_slots));
    return all;
}

struct SequenceBuilder {
    lm::DecodeSession session;
    std::string text;  // decoded form of everything fed + generated
    const lm::Vocab& vocab;

    SequenceBuilder(const lm::Checkpoint& ck)
        : session(ck.config, ck.params, ck.vocab), vocab(ck.vocab) {
        session.feed(std::vector<int>{vocab.bos_id()});
    }

    void feed(const std::string& piece) {
        session.feed_text(piece);
        if (!text.empty()) text += ' ';
        text += piece;
    }

    // generate until stop token (or eos / max_new); appends decoded text
    void generate(const std::string& stop_token, int max_new) {
        const auto ids = session.generate_until(vocab.id(stop_token), max_new);
        const std::string piece = vocab.decode(ids);
        if (!piece.empty()) {
            if (!text.empty()) text += ' ';
            text += piece;
        }
    }
};

const KnowledgeSnippet* find_in(const std::vector<KnowledgeSnippet>& pool,
                                const std::string& id) {
    for (const auto& s : pool) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

}  // namespace

TurnPrediction infer_turn(const Architecture& arch, const Dialogue& dialogue, int turn_index,
                          const StageSpec& stage, const ir::CorpusIndex* index,
                          const PipelineConfig& config) {
    arch.validate();
    stage.validate();
    if (turn_index < 0 || turn_index >= static_cast<int>(dialogue.turns.size())) {
        throw ContractError("infer_turn: turn index out of range");
    }
    const Turn& turn = dialogue.turns[turn_index];
    if (turn.speaker != Speaker::kSystem) {
        throw ContractError("infer_turn: predictions are made for system turns");
    }

    TurnPrediction pred;
    const auto context = gold_context(dialogue, turn_index);
    const std::string context_text =
        seq::serialize_context(context, config.context_token_budget);
    const std::string db_text = seq::serialize_db(turn.db);

    // ---- stage 1: belief states and actions ----
    SequenceBuilder tod(arch.model);
    if (stage.use_gold_tod) {
        pred.belief = turn.belief;
        pred.acts = turn.acts;
        pred.provenance.gold_tod = true;
        tod.feed(context_text);
        tod.feed(seq::serialize_belief(turn.belief));
        tod.feed(db_text);
        tod.feed(seq::serialize_acts(turn.acts));
    } else {
        tod.feed(context_text);
        tod.feed(seq::kBeliefOpen);
        tod.generate(seq::kBeliefClose, 160);
        tod.feed(db_text);  // oracle database results are spliced in
        tod.feed(seq::kActsOpen);
        tod.generate(seq::kActsClose, 120);
        const auto parsed = seq::parse_decode(tod.text, seq::SequenceKind::kTodOnly);
        pred.belief = parsed.belief;
        pred.acts = parsed.acts;
        for (const auto& w : parsed.parse_warnings) pred.warnings.push_back(w);
    }

    // ---- stages 2+3: entities, then knowledge candidates + selection ----
    std::vector<KnowledgeSnippet> selected;
    if (arch.kind != ArchKind::kBaseline) {
        std::vector<KnowledgeSnippet> candidates;
        if (stage.use_gold_knowledge) {
            candidates = dialogue.snippet_pool;
        } else {
            const auto entities =
                cumulative_entities(dialogue, turn_index, pred.belief, pred.acts, config);
            if (!entities.empty()) {
                if (index == nullptr) {
                    throw ConfigError("infer_turn: knowledge stage needs a corpus index");
                }
                candidates = ir::candidates_for_dialogue(*index, entities);
            }
        }
        if (!candidates.empty()) {
            sel::RankContext rctx;
            rctx.utterances = context;
            rctx.window = config.selection_window;
            for (const auto& e :
                 cumulative_entities(dialogue, turn_index, pred.belief, pred.acts, config)) {
                rctx.entity_names.push_back(e.name);
            }
            const auto ranked = sel::rank(config.ranker, rctx, candidates);
            std::vector<std::string> ranked_ids;
            ranked_ids.reserve(ranked.size());
            for (const auto& r : ranked) ranked_ids.push_back(r.snippet.id);
            if (stage.use_gold_knowledge) {
                pred.provenance.gold_knowledge = true;
                const auto merged = seq::merge_snippets(turn.gold_snippet_ids, ranked_ids);
                for (const auto& id : merged) {
                    if (const auto* s = find_in(candidates, id)) selected.push_back(*s);
                }
                pred.selected_snippet_ids = merged;
            } else {
                for (const auto& r : ranked) {
                    if (selected.size() >= 3) break;
                    selected.push_back(r.snippet);
                    pred.selected_snippet_ids.push_back(r.snippet.id);
                }
            }
        }
    }

    // ---- stage 4: decision + response ----
    const bool knowledge_empty = selected.empty() && arch.kind != ArchKind::kBaseline &&
                                 !stage.use_gold_knowledge;
    SequenceBuilder* gen = &tod;
    std::optional<SequenceBuilder> response_builder;
    seq::SequenceKind parse_kind = seq::SequenceKind::kBaseline;
    if (arch.kind == ArchKind::kCombiner) {
        response_builder.emplace(*arch.response_model);
        response_builder->feed(context_text);
        response_builder->feed(seq::serialize_acts(pred.acts));
        response_builder->feed(seq::serialize_knowledge(selected));
        gen = &*response_builder;
        parse_kind = seq::SequenceKind::kResponsePrompt;
    } else if (arch.kind == ArchKind::kPlus) {
        tod.feed(seq::serialize_knowledge(selected));
        parse_kind = seq::SequenceKind::kFull;
    }

    const seq::Decision gold_decision =
        turn.enriched ? seq::Decision::kChitchat : seq::Decision::kNochitchat;
    if (arch.kind == ArchKind::kBaseline) {
        if (stage.use_gold_decision) {
            pred.decision = gold_decision;
            pred.provenance.gold_decision = true;
        } else {
            pred.decision = seq::Decision::kNochitchat;  // never enriches by construction
        }
        gen->feed(seq::kResponseOpen);
        gen->generate(seq::kResponseClose, config.max_response_tokens);
    } else {
        if (stage.use_gold_decision) {
            pred.decision = gold_decision;
            pred.provenance.gold_decision = true;
            gen->feed(seq::decision_token(pred.decision));
            gen->feed(seq::kResponseOpen);
            gen->generate(seq::kResponseClose, config.max_response_tokens);
        } else if (knowledge_empty) {
            // no grounding available: conservative default, response only
            pred.decision = seq::Decision::kNochitchat;
            pred.warnings.push_back("empty candidate set, decision forced to <nochitchat>");
            gen->feed(seq::decision_token(pred.decision));
            gen->feed(seq::kResponseOpen);
            gen->generate(seq::kResponseClose, config.max_response_tokens);
        } else {
            // the model emits the decision token, then the response
            gen->generate(seq::kResponseClose, config.max_response_tokens + 8);
        }
    }

    const auto parsed = seq::parse_decode(gen->text, parse_kind);
    pred.response = parsed.response;
    if (arch.kind != ArchKind::kBaseline && !stage.use_gold_decision && !knowledge_empty) {
        pred.decision = parsed.decision;
    }
    for (const auto& w : parsed.parse_warnings) pred.warnings.push_back(w);
    return pred;
}

namespace {

json belief_json(const BeliefState& b) {
    json out = json::array();
    for (const auto& e : b.entries()) out.push_back(json::array({e.domain, e.slot, e.value}));
    return out;
}

json acts_json(const std::vector<DialogAct>& acts) {
    json out = json::array();
    for (const auto& a : acts) {
        json ja;
        ja["act"] = a.act;
        if (a.slot) ja["slot"] = *a.slot;
        ja["values"] = a.values;
        out.push_back(std::move(ja));
    }
    return out;
}

}  // namespace

EvalOutput run_eval(const Architecture& arch, const std::vector<Dialogue>& dataset,
                    const StageSpec& stage, const ir::CorpusIndex* index,
                    const PipelineConfig& config) {
    arch.validate();
    stage.validate();

    std::vector<BeliefState> pred_beliefs, gold_beliefs;
    std::vector<std::vector<DialogAct>> pred_acts, gold_acts;
    std::vector<seq::Decision> pred_decisions, gold_decisions;
    std::vector<std::vector<std::string>> sel_ids, gold_ids;
    std::vector<std::string> aug_cands, aug_refs, orig_cands, orig_refs, all_cands, all_refs;

    EvalOutput out;
    for (const auto& d : dataset) {
        for (int i = 0; i < static_cast<int>(d.turns.size()); ++i) {
            const Turn& turn = d.turns[i];
            if (turn.speaker != Speaker::kSystem) continue;
            TurnPrediction pred = infer_turn(arch, d, i, stage, index, config);

            pred_beliefs.push_back(pred.belief);
            gold_beliefs.push_back(turn.belief);
            pred_acts.push_back(pred.acts);
            gold_acts.push_back(turn.acts);
            pred_decisions.push_back(pred.decision);
            gold_decisions.push_back(turn.enriched ? seq::Decision::kChitchat
                                                   : seq::Decision::kNochitchat);
            const std::string& reference = turn.final_utterance();
            all_cands.push_back(pred.response);
            all_refs.push_back(reference);
            if (turn.enriched) {
                aug_cands.push_back(pred.response);
                aug_refs.push_back(reference);
                sel_ids.push_back(pred.selected_snippet_ids);
                gold_ids.push_back(turn.gold_snippet_ids);
            } else {
                orig_cands.push_back(pred.response);
                orig_refs.push_back(reference);
            }

            json rec;
            rec["dialogue_id"] = d.id;
            rec["turn_index"] = i;
            rec["belief"] = belief_json(pred.belief);
            rec["acts"] = acts_json(pred.acts);
            rec["decision"] = pred.decision == seq::Decision::kChitchat ? "chitchat"
                                                                        : "nochitchat";
            rec["selected_snippets"] = pred.selected_snippet_ids;
            rec["response"] = pred.response;
            rec["provenance"] = {{"gold_tod", pred.provenance.gold_tod},
                                 {"gold_decision", pred.provenance.gold_decision},
                                 {"gold_knowledge", pred.provenance.gold_knowledge}};
            if (!pred.warnings.empty()) rec["warnings"] = pred.warnings;
            out.dump_lines.push_back(rec.dump());
        }
    }

    metrics::EvalReport& r = out.report;
    r.architecture = arch_name(arch.kind);
    r.stage = stage.name();
    r.turns = static_cast<std::int64_t>(gold_beliefs.size());
    r.enriched_turns = static_cast<std::int64_t>(gold_ids.size());
    r.joint_ga = metrics::joint_ga(pred_beliefs, gold_beliefs);
    r.avg_ga = metrics::avg_ga(pred_beliefs, gold_beliefs);
    r.act_slot_f1 = metrics::act_slot_f1(pred_acts, gold_acts);
    r.bleu4_aug = metrics::bleu4(aug_cands, aug_refs);
    r.bleu4_orig = metrics::bleu4(orig_cands, orig_refs);
    r.bleu4_all = metrics::bleu4(all_cands, all_refs);
    r.decision_f1 = metrics::decision_f1(pred_decisions, gold_decisions);
    if (arch.kind != ArchKind::kBaseline && !gold_ids.empty()) {
        r.selection_recall = metrics::selection_recall(sel_ids, gold_ids);
    }
    return out;
}

TrainingData make_training_data(ArchKind kind, const std::vector<Dialogue>& dataset,
                                const PipelineConfig& config) {
    TrainingData out;
    seq::LinearizeOptions lopt;
    lopt.context_token_budget = config.context_token_budget;

    for (const auto& d : dataset) {
        for (int i = 0; i < static_cast<int>(d.turns.size()); ++i) {
            const Turn& turn = d.turns[i];
            if (turn.speaker != Speaker::kSystem) continue;

            seq::LinearizeInput in;
            in.context = gold_context(d, i);
            in.belief = turn.belief;
            in.db = turn.db;
            in.acts = turn.acts;
            in.decision = turn.enriched ? seq::Decision::kChitchat : seq::Decision::kNochitchat;
            in.response = turn.final_utterance();

            if (kind == ArchKind::kBaseline) {
                auto ts = seq::linearize(in, seq::SequenceKind::kBaseline, lopt);
                ts.dialogue_id = d.id;
                ts.turn_index = i;
                out.main.push_back(std::move(ts));
                continue;
            }

            // knowledge merge: gold ids first, then ranker results
            if (d.snippet_pool.empty()) {
                throw ValidationError("dialogue '" + d.id +
                                      "' has no knowledge pool; run retrieval first");
            }
            sel::RankContext rctx;
            rctx.utterances = in.context;
            rctx.window = config.selection_window;
            for (const auto& e : d.entities) rctx.entity_names.push_back(e.name);
            const auto ranked = sel::rank(config.ranker, rctx, d.snippet_pool);
            std::vector<std::string> ranked_ids;
            ranked_ids.reserve(ranked.size());
            for (const auto& r : ranked) ranked_ids.push_back(r.snippet.id);
            const auto merged = seq::merge_snippets(turn.gold_snippet_ids, ranked_ids);
            in.snippets.clear();
            for (const auto& id : merged) {
                const auto* s = d.find_snippet(id);
                if (!s) throw ValidationError("dialogue '" + d.id + "': snippet '" + id +
                                              "' missing from pool");
                in.snippets.push_back(*s);
            }

            if (kind == ArchKind::kPlus) {
                auto ts = seq::linearize(in, seq::SequenceKind::kFull, lopt);
                ts.dialogue_id = d.id;
                ts.turn_index = i;
                out.main.push_back(std::move(ts));
            } else {  // combiner: TOD stream + response stream
                auto tod = seq::linearize(in, seq::SequenceKind::kTodOnly, lopt);
                tod.dialogue_id = d.id;
                tod.turn_index = i;
                out.main.push_back(std::move(tod));
                auto resp = seq::linearize(in, seq::SequenceKind::kResponsePrompt, lopt);
                resp.dialogue_id = d.id;
                resp.turn_index = i;
                out.response.push_back(std::move(resp));
            }
        }
    }
    return out;
}

}  // namespace kgtod::pipe
