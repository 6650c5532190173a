// kgtod: knowledge-grounded task-oriented dialogue toolkit.
//
// Subcommands cover the whole workflow: synthetic data generation or
// dataset ingestion, corpus indexing, ranker and LM training, staged
// evaluation, and report rendering. Exit codes: 0 success, 2 usage or
// validation failure, 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kgtod/dataset.hpp"
#include "kgtod/lm.hpp"
#include "kgtod/metrics.hpp"
#include "kgtod/pipeline.hpp"
#include "kgtod/retrieval.hpp"
#include "kgtod/select.hpp"
#include "kgtod/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

kgtod::DatasetFormat format_from_name(const std::string& name) {
    if (name == "sgd") return kgtod::DatasetFormat::kSgd;
    if (name == "ketod") return kgtod::DatasetFormat::kKetod;
    throw kgtod::ValidationError("unknown dataset format '" + name + "'");
}

json load_json_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw kgtod::ValidationError(std::string("cannot open ") + what + ": " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw kgtod::ParseError("malformed JSON in " + path + ": " + e.what(), e.byte);
    }
}

// JSON config file whose keys mirror the long flag names; explicit flags win.
void apply_config_defaults(CLI::App* cmd, const json& config) {
    if (config.is_null()) return;
    for (auto* opt : cmd->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || !config.contains(name) || opt->count() > 0) continue;
        const json& v = config.at(name);
        std::vector<std::string> values;
        if (v.is_array()) {
            for (const auto& x : v) {
                values.push_back(x.is_string() ? x.get<std::string>() : x.dump());
            }
        } else {
            values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        }
        opt->add_result(values);
        opt->run_callback();
    }
}

void write_sequences(const std::vector<kgtod::seq::TrainingSequence>& seqs,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw kgtod::ValidationError("cannot write " + path);
    for (const auto& s : seqs) {
        json j;
        switch (s.kind) {
            case kgtod::seq::SequenceKind::kFull: j["kind"] = "full"; break;
            case kgtod::seq::SequenceKind::kTodOnly: j["kind"] = "tod_only"; break;
            case kgtod::seq::SequenceKind::kResponsePrompt: j["kind"] = "response_prompt"; break;
            case kgtod::seq::SequenceKind::kBaseline: j["kind"] = "baseline"; break;
        }
        j["text"] = s.text;
        j["dialogue_id"] = s.dialogue_id;
        j["turn_index"] = s.turn_index;
        out << j.dump() << "\n";
    }
}

std::vector<kgtod::seq::TrainingSequence> read_sequences(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw kgtod::ValidationError("cannot open sequence file: " + path);
    std::vector<kgtod::seq::TrainingSequence> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw kgtod::ParseError("sequence file line " + std::to_string(lineno) + ": " +
                                    e.what(), e.byte);
        }
        kgtod::seq::TrainingSequence s;
        const std::string kind = j.value("kind", "full");
        if (kind == "full") s.kind = kgtod::seq::SequenceKind::kFull;
        else if (kind == "tod_only") s.kind = kgtod::seq::SequenceKind::kTodOnly;
        else if (kind == "response_prompt") s.kind = kgtod::seq::SequenceKind::kResponsePrompt;
        else if (kind == "baseline") s.kind = kgtod::seq::SequenceKind::kBaseline;
        else throw kgtod::ValidationError("unknown sequence kind '" + kind + "' in " + path);
        s.text = j.at("text").get<std::string>();
        s.dialogue_id = j.value("dialogue_id", "");
        s.turn_index = j.value("turn_index", -1);
        out.push_back(std::move(s));
    }
    return out;
}

// versioned index artifact: the corpus plus summary statistics; the
// in-memory index is rebuilt deterministically on load
void write_index_artifact(const std::vector<kgtod::ir::Article>& corpus,
                          const kgtod::ir::CorpusIndex& index, const std::string& path) {
    json j;
    j["format"] = "kgtod-index";
    j["version"] = 1;
    j["documents"] = index.size();
    json arts = json::array();
    for (const auto& a : corpus) {
        arts.push_back({{"title", a.title}, {"paragraphs", a.paragraphs}});
    }
    j["articles"] = std::move(arts);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw kgtod::ValidationError("cannot write index file: " + path);
    out << j.dump() << "\n";
}

kgtod::ir::CorpusIndex load_index_artifact(const std::string& path) {
    const json j = load_json_file(path, "index file");
    if (j.value("format", "") != "kgtod-index") {
        throw kgtod::ValidationError("not an index artifact: " + path);
    }
    std::vector<kgtod::ir::Article> corpus;
    for (const auto& ja : j.at("articles")) {
        kgtod::ir::Article a;
        a.title = ja.at("title").get<std::string>();
        a.paragraphs = ja.at("paragraphs").get<std::vector<std::string>>();
        corpus.push_back(std::move(a));
    }
    return kgtod::ir::CorpusIndex::build(std::move(corpus));
}

kgtod::EntitySlotConfig entity_slots_from_files(const std::string& schema_path,
                                                const std::string& slots_path) {
    if (!schema_path.empty()) {
        return kgtod::synth::SynthSchema::load(schema_path).entity_slot_config();
    }
    kgtod::EntitySlotConfig cfg;
    if (!slots_path.empty()) {
        const json j = load_json_file(slots_path, "entity-slot config");
        for (const auto& [domain, slots] : j.items()) {
            cfg[domain] = slots.get<std::vector<std::string>>();
        }
    }
    return cfg;
}

struct CommonEvalArgs {
    std::string dataset_path;
    std::string format = "ketod";
    std::string arch = "plus";
    std::string model_path;
    std::string response_model_path;
    std::string index_path;
    std::string ranker = "lexical";
    std::string ranker_model_path;
    std::string schema_path;
    std::string entity_slots_path;
    bool gold_tod = false;
    bool gold_decision = false;
    bool gold_knowledge = false;
    int context_budget = 512;
    int selection_window = 2;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-grounded task-oriented dialogue toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; explicit flags win");

    // ------------------------------------------------------------- stats
    auto* cmd_stats = app.add_subcommand("stats", "dataset statistics");
    std::string stats_dataset, stats_format = "ketod", stats_json_out;
    cmd_stats->add_option("--dataset", stats_dataset, "dataset JSON file")->required();
    cmd_stats->add_option("--format", stats_format, "sgd|ketod");
    cmd_stats->add_option("--json", stats_json_out, "also write statistics JSON here");

    // ------------------------------------------------------------- synth
    auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic dataset + corpus");
    std::string synth_schema, synth_out;
    int synth_n = 100;
    std::uint64_t synth_seed = 0;
    bool synth_seed_given = false;
    cmd_synth->add_option("--schema", synth_schema, "synthetic schema JSON")->required();
    cmd_synth->add_option("--n", synth_n, "number of dialogues")->required();
    cmd_synth->add_option("--seed", synth_seed, "generation seed")
        ->required()
        ->each([&](const std::string&) { synth_seed_given = true; });
    cmd_synth->add_option("--out", synth_out, "output directory")->required();

    // ------------------------------------------------------------- index
    auto* cmd_index = app.add_subcommand("index", "build the knowledge corpus index");
    std::string index_corpus, index_out;
    cmd_index->add_option("--corpus", index_corpus, "corpus JSON-lines file")->required();
    cmd_index->add_option("--out", index_out, "index artifact path")->required();

    // ------------------------------------------------------- train-ranker
    auto* cmd_tr = app.add_subcommand("train-ranker", "train the logistic snippet ranker");
    std::string tr_dataset, tr_format = "ketod", tr_out;
    std::uint64_t tr_seed = 1;
    int tr_epochs = 200;
    cmd_tr->add_option("--dataset", tr_dataset, "dataset with gold snippet annotations")
        ->required();
    cmd_tr->add_option("--format", tr_format, "sgd|ketod");
    cmd_tr->add_option("--out", tr_out, "ranker JSON output")->required();
    cmd_tr->add_option("--seed", tr_seed, "training seed")->required();
    cmd_tr->add_option("--epochs", tr_epochs, "gradient descent epochs");

    // --------------------------------------------------------- make-data
    auto* cmd_md = app.add_subcommand("make-data", "linearize training sequences");
    std::string md_dataset, md_format = "ketod", md_arch = "plus", md_out;
    std::string md_ranker = "lexical", md_ranker_model;
    int md_budget = 512, md_window = 2;
    cmd_md->add_option("--dataset", md_dataset, "dataset JSON file")->required();
    cmd_md->add_option("--format", md_format, "sgd|ketod");
    cmd_md->add_option("--arch", md_arch, "baseline|plus|combiner");
    cmd_md->add_option("--ranker", md_ranker, "lexical|trained");
    cmd_md->add_option("--ranker-model", md_ranker_model, "trained ranker JSON");
    cmd_md->add_option("--context-budget", md_budget, "context token budget");
    cmd_md->add_option("--selection-window", md_window, "ranker context window");
    cmd_md->add_option("--out", md_out, "output prefix")->required();

    // -------------------------------------------------------------- train
    auto* cmd_train = app.add_subcommand("train", "train the language model");
    std::string train_data, train_out;
    kgtod::lm::LmConfig lm_cfg;
    cmd_train->add_option("--data", train_data, "training sequence JSON-lines")->required();
    cmd_train->add_option("--out", train_out, "checkpoint path")->required();
    cmd_train->add_option("--layers", lm_cfg.n_layers, "transformer layers");
    cmd_train->add_option("--width", lm_cfg.d_model, "model width");
    cmd_train->add_option("--heads", lm_cfg.n_heads, "attention heads");
    cmd_train->add_option("--ctx", lm_cfg.ctx_len, "context length");
    cmd_train->add_option("--lr", lm_cfg.learning_rate, "learning rate");
    cmd_train->add_option("--batch", lm_cfg.batch_size, "batch size");
    cmd_train->add_option("--epochs", lm_cfg.epochs, "training epochs");
    cmd_train->add_option("--seed", lm_cfg.seed, "training seed")->required();

    // ----------------------------------------------------------- evaluate
    auto* cmd_eval = app.add_subcommand("evaluate", "staged evaluation of an architecture");
    CommonEvalArgs ev;
    std::string eval_out, eval_dump;
    cmd_eval->add_option("--dataset", ev.dataset_path, "dataset JSON file")->required();
    cmd_eval->add_option("--format", ev.format, "sgd|ketod");
    cmd_eval->add_option("--arch", ev.arch, "baseline|plus|combiner");
    cmd_eval->add_option("--model", ev.model_path, "model checkpoint")->required();
    cmd_eval->add_option("--response-model", ev.response_model_path,
                         "combiner response model checkpoint");
    cmd_eval->add_option("--index", ev.index_path, "index artifact (end-to-end stages)");
    cmd_eval->add_option("--ranker", ev.ranker, "lexical|trained");
    cmd_eval->add_option("--ranker-model", ev.ranker_model_path, "trained ranker JSON");
    cmd_eval->add_option("--schema", ev.schema_path, "synthetic schema (entity slots)");
    cmd_eval->add_option("--entity-slots", ev.entity_slots_path,
                         "entity slot config JSON (domain -> slots)");
    cmd_eval->add_flag("--gold-tod", ev.gold_tod, "oracle belief states and actions");
    cmd_eval->add_flag("--gold-decision", ev.gold_decision, "oracle enrichment decision");
    cmd_eval->add_flag("--gold-knowledge", ev.gold_knowledge, "oracle knowledge snippets");
    cmd_eval->add_option("--context-budget", ev.context_budget, "context token budget");
    cmd_eval->add_option("--selection-window", ev.selection_window, "ranker context window");
    cmd_eval->add_option("--out", eval_out, "EvalReport JSON output")->required();
    cmd_eval->add_option("--dump", eval_dump, "per-turn JSON-lines dump");

    // ------------------------------------------------------------- report
    auto* cmd_report = app.add_subcommand("report", "render a comparison table");
    std::vector<std::string> report_inputs;
    std::string report_out;
    cmd_report->add_option("--in", report_inputs, "EvalReport JSON files")->required();
    cmd_report->add_option("--out", report_out, "write the table here too");

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            return app.exit(e) == 0 ? 0 : 2;
        }
        if (!config_path.empty()) {
            const json config = load_json_file(config_path, "config file");
            for (auto* cmd : {cmd_stats, cmd_synth, cmd_index, cmd_tr, cmd_md, cmd_train,
                              cmd_eval, cmd_report}) {
                if (cmd->parsed()) apply_config_defaults(cmd, config);
            }
        }

        if (cmd_stats->parsed()) {
            const auto ds =
                kgtod::load_dataset(stats_dataset, format_from_name(stats_format));
            const auto stats = kgtod::dataset_stats(ds);
            std::cout << stats.to_table();
            if (!stats_json_out.empty()) {
                std::ofstream out(stats_json_out, std::ios::binary);
                if (!out) throw kgtod::ValidationError("cannot write " + stats_json_out);
                out << stats.to_json() << "\n";
            }
        } else if (cmd_synth->parsed()) {
            (void)synth_seed_given;
            const auto schema = kgtod::synth::SynthSchema::load(synth_schema);
            const auto result = kgtod::synth::generate_synthetic(schema, synth_n, synth_seed);
            fs::create_directories(synth_out);
            kgtod::save_dataset(result.dialogues, (fs::path(synth_out) / "dataset.json").string());
            kgtod::ir::save_corpus(result.corpus,
                                   (fs::path(synth_out) / "corpus.jsonl").string());
            const auto stats = kgtod::dataset_stats(result.dialogues);
            std::cout << stats.to_table();
        } else if (cmd_index->parsed()) {
            auto corpus = kgtod::ir::load_corpus(index_corpus);
            const auto index = kgtod::ir::CorpusIndex::build(corpus);
            write_index_artifact(corpus, index, index_out);
            std::cout << "indexed " << index.size() << " articles -> " << index_out << "\n";
        } else if (cmd_tr->parsed()) {
            const auto ds = kgtod::load_dataset(tr_dataset, format_from_name(tr_format));
            std::vector<kgtod::sel::TrainExample> examples;
            for (const auto& d : ds) {
                if (d.snippet_pool.empty()) continue;
                for (int i = 0; i < static_cast<int>(d.turns.size()); ++i) {
                    const auto& t = d.turns[i];
                    if (!t.enriched) continue;
                    kgtod::sel::RankContext rctx;
                    for (int k = 0; k < i; ++k) {
                        rctx.utterances.push_back(d.turns[k].final_utterance());
                    }
                    for (const auto& e : d.entities) rctx.entity_names.push_back(e.name);
                    const std::set<std::string> gold(t.gold_snippet_ids.begin(),
                                                     t.gold_snippet_ids.end());
                    for (const auto& sn : d.snippet_pool) {
                        kgtod::sel::TrainExample ex;
                        ex.context = rctx;
                        ex.candidate = sn;
                        ex.pool = d.snippet_pool;
                        ex.positive = gold.count(sn.id) > 0;
                        examples.push_back(std::move(ex));
                    }
                }
            }
            kgtod::sel::TrainConfig cfg;
            cfg.seed = tr_seed;
            cfg.epochs = tr_epochs;
            const auto model = kgtod::sel::train_ranker(examples, cfg);
            model.save(tr_out);
            std::cout << "trained ranker on " << examples.size() << " examples -> " << tr_out
                      << "\n";
        } else if (cmd_md->parsed()) {
            const auto ds = kgtod::load_dataset(md_dataset, format_from_name(md_format));
            kgtod::pipe::PipelineConfig pcfg;
            pcfg.context_token_budget = md_budget;
            pcfg.selection_window = md_window;
            if (md_ranker == "trained") {
                if (md_ranker_model.empty()) {
                    throw kgtod::ValidationError("--ranker trained requires --ranker-model");
                }
                pcfg.ranker = kgtod::sel::RankerModel::load(md_ranker_model);
            }
            const auto arch = kgtod::pipe::arch_from_name(md_arch);
            const auto data = kgtod::pipe::make_training_data(arch, ds, pcfg);
            write_sequences(data.main, md_out + ".main.jsonl");
            std::cout << "wrote " << data.main.size() << " sequences -> " << md_out
                      << ".main.jsonl\n";
            if (!data.response.empty()) {
                write_sequences(data.response, md_out + ".response.jsonl");
                std::cout << "wrote " << data.response.size() << " sequences -> " << md_out
                          << ".response.jsonl\n";
            }
        } else if (cmd_train->parsed()) {
            const auto seqs = read_sequences(train_data);
            const auto result = kgtod::lm::train_lm(
                seqs, lm_cfg, [](int epoch, double loss, double secs) {
                    std::cout << "epoch " << epoch << ": loss " << loss << " (" << secs
                              << "s)\n";
                });
            kgtod::lm::save_checkpoint(train_out, result.config, result.params, result.vocab);
            json losses = result.epoch_losses;
            std::ofstream lf(train_out + ".losses.json", std::ios::binary);
            lf << losses.dump() << "\n";
            std::cout << "saved checkpoint -> " << train_out << "\n";
        } else if (cmd_eval->parsed()) {
            const auto ds = kgtod::load_dataset(ev.dataset_path, format_from_name(ev.format));
            kgtod::pipe::Architecture arch;
            arch.kind = kgtod::pipe::arch_from_name(ev.arch);
            arch.model = kgtod::lm::load_checkpoint(ev.model_path);
            if (!ev.response_model_path.empty()) {
                arch.response_model = kgtod::lm::load_checkpoint(ev.response_model_path);
            }
            kgtod::pipe::StageSpec stage;
            stage.use_gold_tod = ev.gold_tod;
            stage.use_gold_decision = ev.gold_decision;
            stage.use_gold_knowledge = ev.gold_knowledge;
            kgtod::pipe::PipelineConfig pcfg;
            pcfg.context_token_budget = ev.context_budget;
            pcfg.selection_window = ev.selection_window;
            pcfg.entity_slots = entity_slots_from_files(ev.schema_path, ev.entity_slots_path);
            if (ev.ranker == "trained") {
                if (ev.ranker_model_path.empty()) {
                    throw kgtod::ValidationError("--ranker trained requires --ranker-model");
                }
                pcfg.ranker = kgtod::sel::RankerModel::load(ev.ranker_model_path);
            }
            std::optional<kgtod::ir::CorpusIndex> index;
            if (!ev.index_path.empty()) index = load_index_artifact(ev.index_path);
            const auto result = kgtod::pipe::run_eval(arch, ds, stage,
                                                      index ? &*index : nullptr, pcfg);
            result.report.save(eval_out);
            if (!eval_dump.empty()) {
                std::ofstream dump(eval_dump, std::ios::binary);
                if (!dump) throw kgtod::ValidationError("cannot write " + eval_dump);
                for (const auto& line : result.dump_lines) dump << line << "\n";
            }
            std::cout << kgtod::metrics::render_report_table({result.report});
        } else if (cmd_report->parsed()) {
            std::vector<kgtod::metrics::EvalReport> reports;
            for (const auto& p : report_inputs) {
                reports.push_back(kgtod::metrics::EvalReport::from_json_file(p));
            }
            // documented ordering: all-oracle first, end-to-end last
            std::stable_sort(reports.begin(), reports.end(),
                             [](const auto& a, const auto& b) {
                                 auto rank = [](const std::string& s) {
                                     if (s == "all_oracle") return 0;
                                     if (s.rfind("gold_tod", 0) == 0) return 1;
                                     return 2;
                                 };
                                 return rank(a.stage) < rank(b.stage);
                             });
            const std::string table = kgtod::metrics::render_report_table(reports);
            std::cout << table;
            if (!report_out.empty()) {
                std::ofstream out(report_out, std::ios::binary);
                if (!out) throw kgtod::ValidationError("cannot write " + report_out);
                out << table;
            }
        }
        return 0;
    } catch (const kgtod::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const kgtod::ParseError& e) {
        std::cerr << "error: " << e.what() << " (byte offset " << e.byte_offset << ")\n";
        return 2;
    } catch (const kgtod::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 3;
    }
}
