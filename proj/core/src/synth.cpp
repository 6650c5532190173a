#include "kgtod/synth.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <json.hpp>

namespace kgtod::synth {

using nlohmann::json;

namespace {

std::string capitalized(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

std::string fill(const std::string& tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i);
            if (close == std::string::npos) throw ConfigError("unterminated placeholder in template: " + tmpl);
            const std::string key = tmpl.substr(i + 1, close - i - 1);
            auto it = vars.find(key);
            if (it == vars.end()) throw ConfigError("unknown placeholder {" + key + "} in template: " + tmpl);
            out += it->second;
            i = close + 1;
        } else {
            out += tmpl[i++];
        }
    }
    return out;
}

}  // namespace

const Templates& default_templates() {
    static const Templates t = {
        {"user_open", "hello . i am looking for a {noun} . i want {slot} to be {value} ."},
        {"user_inform", "i want {slot} to be {value} . please recommend one with a good {req} ."},
        {"system_request", "which {slot} do you prefer ?"},
        {"system_offer", "i found {count} options . how about {name} ?"},
        {"system_offer_alt", "you could also try {name} ."},
        {"system_offer_only", "i am afraid {name} is the only option ."},
        {"user_request", "what is the {slot} ?"},
        {"system_inform", "the {slot} of {name} is {value} ."},
        {"user_alts", "can you suggest another option ?"},
        {"user_bye", "sounds great . thank you !"},
        {"system_bye", "you are welcome . goodbye !"},
        {"chitchat_prefix", "fun fact :"},
        // article sentences; {famous_*} expand to "" for ordinary entities
        {"article_p0_s0", "{Name} is a {famous_adj}{noun} with {inf0_slot} {inf0_value}."},
        {"article_p0_s1", "Its {inf1_slot} is {inf1_value}{famous_tail}."},
        {"article_p1_s0", "{Name} was established in {year}{famous_est}."},
        {"article_p1_s1", "{Name} offers a {req0_slot} of {req0_value}{famous_offer}."},
        {"article_p1_s2_famous", "It is widely famous among travelers."},
        {"guide_title", "{domain} guide"},
        {"guide_p0_s0", "Choosing a {noun} is easier when you compare each {inf0_slot} and {inf1_slot}."},
        {"guide_p0_s1", "Many guides sort every {noun} by {req0_slot}."},
        {"guide_p1_s0", "Travelers often ask about the {req1_slot} before they decide."},
        {"guide_p1_s1", "A good {noun} is hard to find without advice."},
    };
    return t;
}

void SynthSchema::expand() {
    if (domains.empty()) throw ConfigError("synthetic schema has no domains");
    for (const auto& [key, value] : default_templates()) {
        templates.try_emplace(key, value);
    }
    for (const auto& d : domains) {
        if (!is_identifier(d.name)) throw ConfigError("domain name must be an identifier: " + d.name);
        if (d.informable.size() < 2) {
            throw ConfigError("domain '" + d.name + "' needs at least 2 informable slots");
        }
        if (d.requestable.size() < 2) {
            throw ConfigError("domain '" + d.name + "' needs at least 2 requestable slots");
        }
        if (d.entity_names.empty()) {
            throw ConfigError("domain '" + d.name + "' has no entities");
        }
        for (const auto& s : d.informable) {
            if (s.values.empty()) throw ConfigError("slot '" + s.slot + "' has no values");
        }
        for (const auto& s : d.requestable) {
            if (s.values.empty()) throw ConfigError("slot '" + s.slot + "' has no values");
        }
    }

    profiles.clear();
    corpus.clear();
    Rng rng(expansion_seed);
    for (const auto& d : domains) {
        for (const auto& name : d.entity_names) {
            EntityProfile p;
            p.name = to_lower(name);
            p.domain = d.name;
            p.famous = rng.bernoulli(famous_fraction);
            p.year = 1950 + static_cast<int>(rng.uniform(60));
            for (const auto& s : d.informable) p.attrs[s.slot] = rng.pick(s.values);
            for (const auto& s : d.requestable) p.attrs[s.slot] = rng.pick(s.values);
            profiles.push_back(std::move(p));
        }
    }

    // one article per entity, plus one guide article per domain
    for (const auto& d : domains) {
        for (const auto& p : profiles) {
            if (p.domain != d.name) continue;
            std::map<std::string, std::string> vars = {
                {"Name", capitalized(p.name)},
                {"name", p.name},
                {"noun", d.noun},
                {"year", std::to_string(p.year)},
                {"inf0_slot", d.informable[0].slot},
                {"inf0_value", p.attrs.at(d.informable[0].slot)},
                {"inf1_slot", d.informable[1].slot},
                {"inf1_value", p.attrs.at(d.informable[1].slot)},
                {"req0_slot", d.requestable[0].slot},
                {"req0_value", p.attrs.at(d.requestable[0].slot)},
                {"famous_adj", p.famous ? "famous " : ""},
                {"famous_tail", p.famous ? " and it is quite famous" : ""},
                {"famous_est", p.famous ? " and became famous" : ""},
                {"famous_offer", p.famous ? " and is famous for it" : ""},
            };
            ir::Article a;
            a.title = p.name;
            std::string p0 = fill(templates.at("article_p0_s0"), vars) + " " +
                             fill(templates.at("article_p0_s1"), vars);
            std::string p1 = fill(templates.at("article_p1_s0"), vars) + " " +
                             fill(templates.at("article_p1_s1"), vars);
            if (p.famous) p1 += " " + fill(templates.at("article_p1_s2_famous"), vars);
            a.paragraphs = {p0, p1};
            corpus.push_back(std::move(a));
        }
        std::map<std::string, std::string> gv = {
            {"domain", d.name},
            {"noun", d.noun},
            {"inf0_slot", d.informable[0].slot},
            {"inf1_slot", d.informable[1].slot},
            {"req0_slot", d.requestable[0].slot},
            {"req1_slot", d.requestable[1].slot},
        };
        ir::Article g;
        g.title = fill(templates.at("guide_title"), gv);
        g.paragraphs = {
            fill(templates.at("guide_p0_s0"), gv) + " " + fill(templates.at("guide_p0_s1"), gv),
            fill(templates.at("guide_p1_s0"), gv) + " " + fill(templates.at("guide_p1_s1"), gv),
        };
        corpus.push_back(std::move(g));
    }
    // invariant: every entity has an article (by construction: titles are
    // entity names); double-check titles are unique
    std::set<std::string> titles;
    for (const auto& a : corpus) {
        if (!titles.insert(a.title).second) {
            throw ConfigError("duplicate entity/article name in schema: " + a.title);
        }
    }
}

SynthSchema SynthSchema::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open schema file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("malformed schema file " + path + ": " + e.what(), e.byte);
    }
    SynthSchema s;
    s.famous_fraction = j.value("famous_fraction", 0.45);
    s.expansion_seed = j.value("expansion_seed", 1234ULL);
    if (j.contains("templates")) {
        for (const auto& [k, v] : j.at("templates").items()) {
            s.templates[k] = v.get<std::string>();
        }
    }
    std::vector<std::string> shared_adjectives, shared_nouns;
    if (j.contains("name_adjectives")) {
        shared_adjectives = j.at("name_adjectives").get<std::vector<std::string>>();
    }
    if (j.contains("name_nouns")) {
        shared_nouns = j.at("name_nouns").get<std::vector<std::string>>();
    }
    if (!j.contains("domains") || !j.at("domains").is_array()) {
        throw ConfigError("schema file has no domains: " + path);
    }
    int domain_index = 0;
    for (const auto& jd : j.at("domains")) {
        DomainSpec d;
        d.name = jd.at("name").get<std::string>();
        d.noun = jd.value("noun", d.name);
        d.entity_slot = jd.value("entity_slot", "name");
        auto parse_slots = [](const json& arr) {
            std::vector<SlotSpec> out;
            for (const auto& js : arr) {
                SlotSpec s2;
                s2.slot = js.at("slot").get<std::string>();
                s2.values = js.at("values").get<std::vector<std::string>>();
                out.push_back(std::move(s2));
            }
            return out;
        };
        if (jd.contains("informable")) d.informable = parse_slots(jd.at("informable"));
        if (jd.contains("requestable")) d.requestable = parse_slots(jd.at("requestable"));
        if (jd.contains("entities")) {
            d.entity_names = jd.at("entities").get<std::vector<std::string>>();
        } else if (jd.contains("entity_count")) {
            // compose names from the shared pools on a fixed deterministic walk
            const int count = jd.at("entity_count").get<int>();
            if (shared_adjectives.empty() || shared_nouns.empty()) {
                throw ConfigError("entity_count requires name_adjectives and name_nouns: " + path);
            }
            std::set<std::string> used;
            const std::size_t a_n = shared_adjectives.size();
            const std::size_t n_n = shared_nouns.size();
            std::size_t step = 0;
            while (static_cast<int>(d.entity_names.size()) < count) {
                const std::size_t ai = (step * 7 + static_cast<std::size_t>(domain_index) * 3) % a_n;
                // the step/a_n term shifts the pairing each full cycle so the
                // walk covers the whole adjective x noun grid
                const std::size_t ni =
                    (step * 11 + step / a_n + static_cast<std::size_t>(domain_index) * 5) % n_n;
                std::string name = shared_adjectives[ai] + " " + shared_nouns[ni];
                if (used.insert(name).second) d.entity_names.push_back(std::move(name));
                ++step;
                if (step > a_n * n_n * 4) {
                    throw ConfigError("cannot compose " + std::to_string(count) +
                                      " unique entity names for domain " + d.name);
                }
            }
        }
        s.domains.push_back(std::move(d));
        ++domain_index;
    }
    s.expand();
    return s;
}

EntitySlotConfig SynthSchema::entity_slot_config() const {
    EntitySlotConfig cfg;
    for (const auto& d : domains) cfg[d.name] = {d.entity_slot};
    return cfg;
}

const EntityProfile* SynthSchema::profile(const std::string& name,
                                          const std::string& domain) const {
    const std::string norm = normalize_value(name);
    for (const auto& p : profiles) {
        if (p.domain == domain && p.name == norm) return &p;
    }
    return nullptr;
}

namespace {

struct GeneratorState {
    const SynthSchema& schema;
    const ir::CorpusIndex& index;
    Rng rng;
};

// entities of `domain` whose attrs match both constraints, schema order
std::vector<const EntityProfile*> matching_entities(const SynthSchema& schema,
                                                    const std::string& domain,
                                                    const std::vector<SlotValue>& constraints) {
    std::vector<const EntityProfile*> out;
    for (const auto& p : schema.profiles) {
        if (p.domain != domain) continue;
        bool ok = true;
        for (const auto& c : constraints) {
            auto it = p.attrs.find(c.slot);
            if (it == p.attrs.end() || it->second != c.value) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(&p);
    }
    return out;
}

DbResult make_db(const std::string& domain, int match_count, const EntityProfile& offered,
                 const DomainSpec& spec) {
    DbResult db;
    db.service = domain;
    db.match_count = match_count;
    std::map<std::string, std::string> rec;
    rec[spec.entity_slot] = offered.name;
    for (const auto& s : spec.requestable) rec[s.slot] = offered.attrs.at(s.slot);
    db.records.push_back(std::move(rec));
    return db;
}

Dialogue build_dialogue(GeneratorState& g, int serial) {
    const SynthSchema& schema = g.schema;
    const auto& tpl = schema.templates;
    Rng& rng = g.rng;

    const DomainSpec& dom = schema.domains[rng.uniform(schema.domains.size())];
    // choose the offered entity first, then constraints from its attributes
    std::vector<const EntityProfile*> domain_entities;
    for (const auto& p : schema.profiles) {
        if (p.domain == dom.name) domain_entities.push_back(&p);
    }
    const EntityProfile& target = *domain_entities[rng.uniform(domain_entities.size())];

    // two distinct informable constraint slots
    std::vector<int> slot_order(dom.informable.size());
    for (std::size_t i = 0; i < slot_order.size(); ++i) slot_order[i] = static_cast<int>(i);
    rng.shuffle(slot_order);
    const SlotSpec& inf_a = dom.informable[slot_order[0]];
    const SlotSpec& inf_b = dom.informable[slot_order[1]];
    const std::string val_a = target.attrs.at(inf_a.slot);
    const std::string val_b = target.attrs.at(inf_b.slot);

    const SlotSpec& req_hook = dom.requestable[0];

    Dialogue d;
    d.id = "synth_" + std::to_string(100000 + serial).substr(1);
    d.domains = {dom.name};

    BeliefState belief;
    auto user_turn = [&](const std::string& utt, std::vector<DialogAct> acts) {
        Turn t;
        t.speaker = Speaker::kUser;
        t.utterance = utt;
        t.belief = belief;
        t.acts = std::move(acts);
        d.turns.push_back(std::move(t));
    };
    auto system_turn = [&](const std::string& utt, std::vector<DialogAct> acts,
                           std::optional<DbResult> db = std::nullopt) {
        Turn t;
        t.speaker = Speaker::kSystem;
        t.utterance = utt;
        t.belief = belief;
        t.acts = std::move(acts);
        t.db = std::move(db);
        d.turns.push_back(std::move(t));
    };

    // t0: opening + first constraint
    belief.set(SlotValue(dom.name, inf_a.slot, val_a));
    user_turn(fill(tpl.at("user_open"),
                   {{"noun", dom.noun}, {"slot", inf_a.slot}, {"value", val_a}}),
              {DialogAct("INFORM", inf_a.slot, {val_a})});

    // t1: system asks for the second constraint
    system_turn(fill(tpl.at("system_request"), {{"slot", inf_b.slot}}),
                {DialogAct("REQUEST", inf_b.slot)});

    // t2: second constraint + the requestable hook
    belief.set(SlotValue(dom.name, inf_b.slot, val_b));
    user_turn(fill(tpl.at("user_inform"),
                   {{"slot", inf_b.slot}, {"value", val_b}, {"req", req_hook.slot}}),
              {DialogAct("INFORM", inf_b.slot, {val_b})});

    // t3: offer
    const auto matches = matching_entities(
        schema, dom.name,
        {SlotValue(dom.name, inf_a.slot, val_a), SlotValue(dom.name, inf_b.slot, val_b)});
    const int count = static_cast<int>(matches.size());
    std::string offer_utt = fill(tpl.at("system_offer"),
                                 {{"count", std::to_string(count)}, {"name", target.name}});
    system_turn(offer_utt, {DialogAct("OFFER", dom.entity_slot, {target.name})},
                make_db(dom.name, count, target, dom));
    const std::size_t offer_index = d.turns.size() - 1;
    d.entities.push_back(Entity{target.name, dom.name});

    // continuation
    const double branch = rng.uniform_real();
    const EntityProfile* alt = nullptr;
    if (branch < 0.45) {
        // ask one requestable attribute, answer, close
        const SlotSpec& req = dom.requestable[rng.uniform(dom.requestable.size())];
        user_turn(fill(tpl.at("user_request"), {{"slot", req.slot}}),
                  {DialogAct("REQUEST", req.slot)});
        system_turn(fill(tpl.at("system_inform"), {{"slot", req.slot},
                                                   {"name", target.name},
                                                   {"value", target.attrs.at(req.slot)}}),
                    {DialogAct("INFORM", req.slot, {target.attrs.at(req.slot)})},
                    make_db(dom.name, count, target, dom));
        user_turn(tpl.at("user_bye"), {DialogAct("THANK_YOU")});
        system_turn(tpl.at("system_bye"), {DialogAct("GOODBYE")});
    } else if (branch < 0.85) {
        user_turn(tpl.at("user_bye"), {DialogAct("THANK_YOU")});
        system_turn(tpl.at("system_bye"), {DialogAct("GOODBYE")});
    } else {
        // alternative offer, then a request, then close
        user_turn(tpl.at("user_alts"), {DialogAct("REQUEST_ALTS")});
        for (const auto* m : matches) {
            if (m != &target) {
                alt = m;
                break;
            }
        }
        if (alt) {
            system_turn(fill(tpl.at("system_offer_alt"), {{"name", alt->name}}),
                        {DialogAct("OFFER", dom.entity_slot, {alt->name})},
                        make_db(dom.name, count, *alt, dom));
            d.entities.push_back(Entity{alt->name, dom.name});
        } else {
            system_turn(fill(tpl.at("system_offer_only"), {{"name", target.name}}),
                        {DialogAct("NOTIFY_FAILURE")},
                        make_db(dom.name, count, target, dom));
        }
        const EntityProfile& subject = alt ? *alt : target;
        const SlotSpec& req = dom.requestable[rng.uniform(dom.requestable.size())];
        user_turn(fill(tpl.at("user_request"), {{"slot", req.slot}}),
                  {DialogAct("REQUEST", req.slot)});
        system_turn(fill(tpl.at("system_inform"), {{"slot", req.slot},
                                                   {"name", subject.name},
                                                   {"value", subject.attrs.at(req.slot)}}),
                    {DialogAct("INFORM", req.slot, {subject.attrs.at(req.slot)})},
                    make_db(dom.name, count, subject, dom));
        user_turn(tpl.at("user_bye"), {DialogAct("THANK_YOU")});
        system_turn(tpl.at("system_bye"), {DialogAct("GOODBYE")});
    }

    // knowledge pool from the same retrieval chain used at inference
    d.snippet_pool = ir::candidates_for_dialogue(g.index, d.entities);

    // enrichment: the first offer turn, iff the offered entity is famous
    // and its fact snippets were retrieved
    if (target.famous) {
        std::vector<const KnowledgeSnippet*> golds;
        auto find_fact = [&](int sentence) -> const KnowledgeSnippet* {
            return d.find_snippet(make_snippet_id(target.name, 0, 1, sentence));
        };
        const KnowledgeSnippet* rating_fact = find_fact(1);
        const KnowledgeSnippet* established_fact = find_fact(0);
        const KnowledgeSnippet* famous_fact = find_fact(2);
        if (rating_fact) golds.push_back(rating_fact);
        const double extra = rng.uniform_real();
        if (extra < 0.35 && established_fact) golds.push_back(established_fact);
        if (extra < 0.05 && famous_fact) golds.push_back(famous_fact);
        if (!golds.empty()) {
            Turn& offer_turn = d.turns[offer_index];
            offer_turn.enriched = true;
            std::string chitchat = tpl.at("chitchat_prefix");
            for (const auto* s : golds) {
                offer_turn.gold_snippet_ids.push_back(s->id);
                chitchat += " " + s->text;
            }
            offer_turn.enriched_utterance = offer_turn.utterance + " " + chitchat;
        }
    }
    return d;
}

}  // namespace

SynthResult generate_synthetic(const SynthSchema& schema, int n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("generate_synthetic: n must be >= 1");
    if (schema.domains.empty()) throw ConfigError("generate_synthetic: schema has no domains");
    if (schema.profiles.empty() || schema.corpus.empty()) {
        throw ConfigError("generate_synthetic: schema not expanded (call expand())");
    }
    SynthResult result;
    result.corpus = schema.corpus;
    ir::CorpusIndex index = ir::CorpusIndex::build(schema.corpus);
    GeneratorState g{schema, index, Rng(seed)};
    result.dialogues.reserve(n);
    for (int i = 0; i < n; ++i) {
        Dialogue d = build_dialogue(g, i);
        validate_dialogue(d);
        result.dialogues.push_back(std::move(d));
    }
    return result;
}

}  // namespace kgtod::synth
