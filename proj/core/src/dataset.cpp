#include "kgtod/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace kgtod {

using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("malformed JSON in " + path + ": " + e.what(), e.byte);
    }
}

BeliefState belief_from_json(const json& frames) {
    BeliefState b;
    for (const auto& frame : frames) {
        if (!frame.contains("state")) continue;
        const auto& state = frame.at("state");
        if (!state.contains("slot_values")) continue;
        const std::string domain = frame.value("service", "");
        for (const auto& [slot, values] : state.at("slot_values").items()) {
            std::string value;
            if (values.is_array() && !values.empty()) {
                value = values.front().get<std::string>();
            } else if (values.is_string()) {
                value = values.get<std::string>();
            }
            if (!value.empty()) b.set(SlotValue(domain, slot, value));
        }
    }
    return b;
}

std::vector<DialogAct> acts_from_json(const json& frames) {
    std::vector<DialogAct> acts;
    for (const auto& frame : frames) {
        if (!frame.contains("actions")) continue;
        for (const auto& a : frame.at("actions")) {
            std::optional<std::string> slot;
            if (a.contains("slot") && a.at("slot").is_string() &&
                !a.at("slot").get<std::string>().empty()) {
                slot = a.at("slot").get<std::string>();
            }
            std::vector<std::string> values;
            if (a.contains("values")) {
                for (const auto& v : a.at("values")) values.push_back(v.get<std::string>());
            }
            if (!values.empty() && !slot) slot = "value";  // tolerated in the wild
            acts.emplace_back(a.at("act").get<std::string>(), std::move(slot), std::move(values));
        }
    }
    return acts;
}

std::optional<DbResult> db_from_json(const json& frames) {
    for (const auto& frame : frames) {
        if (!frame.contains("service_results") && !frame.contains("match_count")) continue;
        DbResult db;
        db.service = frame.value("service", "");
        if (frame.contains("service_results")) {
            for (const auto& rec : frame.at("service_results")) {
                std::map<std::string, std::string> fields;
                for (const auto& [k, v] : rec.items()) {
                    fields[k] = v.is_string() ? v.get<std::string>() : v.dump();
                }
                db.records.push_back(std::move(fields));
            }
        }
        db.match_count = frame.value("match_count", static_cast<int>(db.records.size()));
        if (db.match_count < static_cast<int>(db.records.size())) {
            db.match_count = static_cast<int>(db.records.size());
        }
        return db;
    }
    return std::nullopt;
}

Turn turn_from_json(const json& jt, DatasetFormat format) {
    Turn t;
    t.speaker = speaker_from_name(jt.at("speaker").get<std::string>());
    t.utterance = jt.at("utterance").get<std::string>();
    if (jt.contains("frames")) {
        const auto& frames = jt.at("frames");
        t.belief = belief_from_json(frames);
        t.acts = acts_from_json(frames);
        t.db = db_from_json(frames);
    }
    if (format == DatasetFormat::kKetod) {
        t.enriched = jt.value("enrich", false);
        if (jt.contains("enriched_utter") && jt.at("enriched_utter").is_string()) {
            std::string eu = jt.at("enriched_utter").get<std::string>();
            if (!eu.empty()) t.enriched_utterance = std::move(eu);
        }
        if (jt.contains("kg_snippet_ids")) {
            for (const auto& sid : jt.at("kg_snippet_ids")) {
                t.gold_snippet_ids.push_back(sid.is_string() ? sid.get<std::string>()
                                                             : sid.dump());
            }
        }
        // Release-style inline gold snippets: ids plus text carried on the turn.
        if (jt.contains("kg_snippets")) {
            for (const auto& js : jt.at("kg_snippets")) {
                std::string sid;
                if (js.contains("id")) {
                    sid = js.at("id").is_string() ? js.at("id").get<std::string>()
                                                  : js.at("id").dump();
                } else {
                    sid = make_snippet_id(js.value("title", "snippet"), 0, 0,
                                          static_cast<int>(t.gold_snippet_ids.size()));
                }
                if (std::find(t.gold_snippet_ids.begin(), t.gold_snippet_ids.end(), sid) ==
                    t.gold_snippet_ids.end()) {
                    t.gold_snippet_ids.push_back(sid);
                }
            }
        }
    }
    return t;
}

Dialogue dialogue_from_json(const json& jd, DatasetFormat format) {
    Dialogue d;
    d.id = jd.at("dialogue_id").get<std::string>();
    if (jd.contains("services")) {
        for (const auto& s : jd.at("services")) d.domains.push_back(s.get<std::string>());
    } else if (jd.contains("domains")) {
        for (const auto& s : jd.at("domains")) d.domains.push_back(s.get<std::string>());
    }
    for (const auto& jt : jd.at("turns")) {
        d.turns.push_back(turn_from_json(jt, format));
    }
    if (format == DatasetFormat::kKetod) {
        if (jd.contains("kg_snippets")) {
            std::size_t k = 0;
            for (const auto& js : jd.at("kg_snippets")) {
                KnowledgeSnippet sn;
                sn.id = js.contains("id")
                            ? (js.at("id").is_string() ? js.at("id").get<std::string>()
                                                       : js.at("id").dump())
                            : make_snippet_id(js.value("title", "snippet"), 0, 0,
                                              static_cast<int>(k));
                sn.text = js.value("text", "");
                sn.source_title = js.value("title", "");
                d.snippet_pool.push_back(std::move(sn));
                ++k;
            }
        }
        // pool entries from inline turn-level snippets
        for (auto& jt : jd.at("turns")) {
            if (!jt.contains("kg_snippets")) continue;
            std::size_t k = 0;
            for (const auto& js : jt.at("kg_snippets")) {
                KnowledgeSnippet sn;
                sn.id = js.contains("id")
                            ? (js.at("id").is_string() ? js.at("id").get<std::string>()
                                                       : js.at("id").dump())
                            : make_snippet_id(js.value("title", "snippet"), 0, 0,
                                              static_cast<int>(k));
                sn.text = js.value("text", "");
                sn.source_title = js.value("title", "");
                if (!d.find_snippet(sn.id)) d.snippet_pool.push_back(std::move(sn));
                ++k;
            }
        }
        // entity annotations: turn-level entity_query lists take precedence
        for (const auto& jt : jd.at("turns")) {
            if (!jt.contains("entity_query")) continue;
            for (const auto& q : jt.at("entity_query")) {
                Entity e;
                if (q.is_array() && q.size() >= 2) {
                    e.domain = q.at(0).get<std::string>();
                    e.name = q.at(1).get<std::string>();
                } else if (q.is_string()) {
                    e.name = q.get<std::string>();
                    e.domain = d.domains.empty() ? "" : d.domains.front();
                }
                bool dup = false;
                for (const auto& prev : d.entities) {
                    if (normalize_value(prev.name) == normalize_value(e.name) &&
                        prev.domain == e.domain) {
                        dup = true;
                        break;
                    }
                }
                if (!dup && !e.name.empty()) d.entities.push_back(std::move(e));
            }
        }
    }
    return d;
}

}  // namespace

std::vector<Dialogue> load_dataset(const std::string& path, DatasetFormat format) {
    const json root = read_json_file(path);
    if (!root.is_array()) {
        throw ValidationError("dataset file must be a JSON array of dialogues: " + path);
    }
    std::vector<Dialogue> out;
    out.reserve(root.size());
    for (const auto& jd : root) {
        Dialogue d = dialogue_from_json(jd, format);
        validate_dialogue(d);
        out.push_back(std::move(d));
    }
    std::unordered_set<std::string> seen;
    for (const auto& d : out) {
        if (!seen.insert(d.id).second) {
            throw ValidationError("duplicate dialogue id '" + d.id + "' in " + path);
        }
    }
    return out;
}

void save_dataset(const std::vector<Dialogue>& ds, const std::string& path) {
    json root = json::array();
    for (const auto& d : ds) {
        json jd;
        jd["dialogue_id"] = d.id;
        jd["domains"] = d.domains;
        if (!d.snippet_pool.empty()) {
            json pool = json::array();
            for (const auto& s : d.snippet_pool) {
                pool.push_back({{"id", s.id}, {"title", s.source_title}, {"text", s.text}});
            }
            jd["kg_snippets"] = std::move(pool);
        }
        json jturns = json::array();
        for (const auto& t : d.turns) {
            json jt;
            jt["speaker"] = speaker_name(t.speaker);
            jt["utterance"] = t.utterance;
            json frame;
            frame["service"] = d.domains.empty() ? "" : d.domains.front();
            if (!t.belief.empty()) {
                json sv = json::object();
                for (const auto& e : t.belief.entries()) {
                    frame["service"] = e.domain;
                    sv[e.slot] = json::array({e.value});
                }
                frame["state"]["slot_values"] = std::move(sv);
            }
            if (!t.acts.empty()) {
                json acts = json::array();
                for (const auto& a : t.acts) {
                    json ja;
                    ja["act"] = a.act;
                    if (a.slot) ja["slot"] = *a.slot;
                    ja["values"] = a.values;
                    acts.push_back(std::move(ja));
                }
                frame["actions"] = std::move(acts);
            }
            if (t.db) {
                frame["service"] = t.db->service;
                frame["match_count"] = t.db->match_count;
                json recs = json::array();
                for (const auto& r : t.db->records) recs.push_back(r);
                frame["service_results"] = std::move(recs);
            }
            jt["frames"] = json::array({std::move(frame)});
            if (t.enriched) {
                jt["enrich"] = true;
                jt["enriched_utter"] = t.enriched_utterance.value_or("");
                jt["kg_snippet_ids"] = t.gold_snippet_ids;
            }
            jturns.push_back(std::move(jt));
        }
        jd["turns"] = std::move(jturns);
        if (!d.entities.empty()) {
            json ents = json::array();
            for (const auto& e : d.entities) ents.push_back(json::array({e.domain, e.name}));
            // single annotation site keeps the round-trip simple
            jd["turns"].front()["entity_query"] = std::move(ents);
        }
        root.push_back(std::move(jd));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path);
    out << root.dump(1) << "\n";
}

namespace {

bool slot_designated(const EntitySlotConfig& config, const std::string& domain,
                     const std::string& slot) {
    auto it = config.find(domain);
    if (it == config.end()) return false;
    for (const auto& s : it->second) {
        if (s == slot) return true;
    }
    return false;
}

struct EntityCollector {
    std::vector<Entity> out;
    std::set<std::pair<std::string, std::string>> seen;  // (normalized name, domain)
    void add(const std::string& value, const std::string& domain) {
        if (value.empty()) return;
        auto key = std::make_pair(normalize_value(value), domain);
        if (seen.insert(key).second) out.push_back(Entity{value, domain});
    }
    void collect(const BeliefState& belief, const std::vector<DialogAct>& acts,
                 const std::string& default_domain, const EntitySlotConfig& config) {
        for (const auto& e : belief.entries()) {
            if (slot_designated(config, e.domain, e.slot)) add(e.value, e.domain);
        }
        for (const auto& a : acts) {
            if (!a.slot) continue;
            if (slot_designated(config, default_domain, *a.slot)) {
                for (const auto& v : a.values) add(v, default_domain);
            }
        }
    }
};

}  // namespace

std::vector<Entity> extract_entities(const Dialogue& d, const EntitySlotConfig& config) {
    if (!d.entities.empty()) return d.entities;
    EntityCollector collector;
    const std::string default_domain = d.domains.empty() ? "" : d.domains.front();
    for (const auto& t : d.turns) {
        collector.collect(t.belief, t.acts, default_domain, config);
    }
    return std::move(collector.out);
}

std::vector<Entity> extract_entities(const BeliefState& belief,
                                     const std::vector<DialogAct>& acts,
                                     const std::string& default_domain,
                                     const EntitySlotConfig& config) {
    EntityCollector collector;
    collector.collect(belief, acts, default_domain, config);
    return std::move(collector.out);
}

namespace {

std::string base_domain(const std::string& domain) {
    std::string s = to_lower(domain);
    auto pos = s.rfind('_');
    if (pos != std::string::npos && pos + 1 < s.size()) {
        bool digits = true;
        for (std::size_t i = pos + 1; i < s.size(); ++i) {
            if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
                digits = false;
                break;
            }
        }
        if (digits) s.erase(pos);
    }
    return s;
}

}  // namespace

std::vector<Dialogue> filter_dialogues(const std::vector<Dialogue>& ds,
                                       const FilterOptions& options) {
    std::vector<Dialogue> out;
    out.reserve(ds.size());
    for (const auto& d : ds) {
        bool excluded = false;
        for (const auto& dom : d.domains) {
            const std::string base = base_domain(dom);
            for (const auto& ex : options.excluded_domains) {
                if (base == to_lower(ex)) {
                    excluded = true;
                    break;
                }
            }
            if (excluded) break;
        }
        if (excluded) continue;
        if (static_cast<int>(d.entities.size()) > options.max_entities) continue;
        out.push_back(d);
    }
    return out;
}

DatasetStats dataset_stats(const std::vector<Dialogue>& ds) {
    DatasetStats st;
    st.dialogues = static_cast<std::int64_t>(ds.size());
    std::set<std::pair<std::string, std::string>> entities;
    std::set<std::string> snippets;
    std::set<std::string> vocab;
    std::int64_t entity_mentions = 0;
    std::int64_t pooled_snippets = 0;
    std::int64_t enriched_token_total = 0;

    for (const auto& d : ds) {
        st.turns += static_cast<std::int64_t>(d.turns.size());
        entity_mentions += static_cast<std::int64_t>(d.entities.size());
        pooled_snippets += static_cast<std::int64_t>(d.snippet_pool.size());
        for (const auto& e : d.entities) {
            entities.insert({normalize_value(e.name), e.domain});
        }
        for (const auto& s : d.snippet_pool) snippets.insert(s.id);
        for (const auto& t : d.turns) {
            if (t.speaker == Speaker::kSystem) ++st.system_turns;
            if (t.enriched) {
                ++st.enriched_turns;
                enriched_token_total +=
                    static_cast<std::int64_t>(tokenize(t.final_utterance()).size());
            }
            for (const auto& tok : tokenize(t.utterance)) vocab.insert(tok);
        }
    }
    st.distinct_entities = static_cast<std::int64_t>(entities.size());
    st.distinct_snippets = static_cast<std::int64_t>(snippets.size());
    st.vocabulary = static_cast<std::int64_t>(vocab.size());
    if (st.dialogues > 0) {
        st.avg_turns_per_dialogue = static_cast<double>(st.turns) / st.dialogues;
        st.avg_entities_per_dialogue = static_cast<double>(entity_mentions) / st.dialogues;
        st.avg_snippets_per_dialogue = static_cast<double>(pooled_snippets) / st.dialogues;
    }
    if (st.enriched_turns > 0) {
        st.avg_tokens_enriched_response =
            static_cast<double>(enriched_token_total) / st.enriched_turns;
    }
    if (st.system_turns > 0) {
        st.enriched_system_turn_fraction =
            static_cast<double>(st.enriched_turns) / st.system_turns;
    }
    return st;
}

namespace {

void put_opt(json& j, const char* key, const std::optional<double>& v) {
    if (v) {
        j[key] = *v;
    } else {
        j[key] = nullptr;
    }
}

}  // namespace

std::string DatasetStats::to_json() const {
    json j;
    j["dialogues"] = dialogues;
    j["turns"] = turns;
    j["enriched_turns"] = enriched_turns;
    j["system_turns"] = system_turns;
    j["entities"] = distinct_entities;
    j["knowledge_snippets"] = distinct_snippets;
    j["vocabulary"] = vocabulary;
    put_opt(j, "avg_turns_per_dialogue", avg_turns_per_dialogue);
    put_opt(j, "avg_entities_per_dialogue", avg_entities_per_dialogue);
    put_opt(j, "avg_snippets_per_dialogue", avg_snippets_per_dialogue);
    put_opt(j, "avg_tokens_enriched_response", avg_tokens_enriched_response);
    put_opt(j, "enriched_system_turn_fraction", enriched_system_turn_fraction);
    return j.dump(2);
}

std::string DatasetStats::to_table() const {
    std::ostringstream os;
    auto row = [&](const std::string& label, const std::string& value) {
        os << label;
        for (std::size_t i = label.size(); i < 42; ++i) os << ' ';
        os << value << "\n";
    };
    auto num = [](double v) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(2);
        s << v;
        return s.str();
    };
    row("Dialogues", std::to_string(dialogues));
    row("Vocabulary", std::to_string(vocabulary));
    row("All turns", std::to_string(turns));
    row("Turns enriched with chit-chat", std::to_string(enriched_turns));
    row("All entities", std::to_string(distinct_entities));
    row("All knowledge snippets", std::to_string(distinct_snippets));
    row("Avg. # turns per dialogue", avg_turns_per_dialogue ? num(*avg_turns_per_dialogue) : "-");
    row("Avg. # tokens in enriched responses",
        avg_tokens_enriched_response ? num(*avg_tokens_enriched_response) : "-");
    row("Avg. # entities per dialogue",
        avg_entities_per_dialogue ? num(*avg_entities_per_dialogue) : "-");
    row("Avg. # knowledge snippets per dialogue",
        avg_snippets_per_dialogue ? num(*avg_snippets_per_dialogue) : "-");
    return os.str();
}

}  // namespace kgtod
