#include "kgtod/data.hpp"

#include <algorithm>

namespace kgtod {

SlotValue::SlotValue(std::string d, std::string s, std::string v)
    : domain(std::move(d)), slot(std::move(s)), value(std::move(v)) {
    if (domain.empty() || slot.empty()) {
        throw ValidationError("SlotValue: domain and slot must be non-empty");
    }
    if (!is_identifier(domain) || !is_identifier(slot)) {
        throw ValidationError("SlotValue: domain and slot must be identifiers, got '" + domain +
                              "' / '" + slot + "'");
    }
}

bool SlotValue::operator==(const SlotValue& o) const {
    return domain == o.domain && slot == o.slot &&
           normalize_value(value) == normalize_value(o.value);
}

void BeliefState::set(SlotValue sv) {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), sv,
                               [](const SlotValue& a, const SlotValue& b) {
                                   return std::tie(a.domain, a.slot) < std::tie(b.domain, b.slot);
                               });
    if (it != entries_.end() && it->same_key(sv)) {
        it->value = std::move(sv.value);
    } else {
        entries_.insert(it, std::move(sv));
    }
}

const std::string* BeliefState::find(const std::string& domain, const std::string& slot) const {
    for (const auto& e : entries_) {
        if (e.domain == domain && e.slot == slot) return &e.value;
    }
    return nullptr;
}

bool BeliefState::operator==(const BeliefState& o) const {
    return entries_ == o.entries_;  // sorted; SlotValue compares normalized
}

DialogAct::DialogAct(std::string a, std::optional<std::string> s, std::vector<std::string> v)
    : act(std::move(a)), slot(std::move(s)), values(std::move(v)) {
    if (act.empty() || !is_identifier(act)) {
        throw ValidationError("DialogAct: act must be a non-empty identifier");
    }
    if (slot && !is_identifier(*slot)) {
        throw ValidationError("DialogAct: slot must be an identifier, got '" + *slot + "'");
    }
    if (!values.empty() && !slot) {
        throw ValidationError("DialogAct: values present without a slot");
    }
}

bool DialogAct::operator==(const DialogAct& o) const {
    if (act != o.act || slot.has_value() != o.slot.has_value()) return false;
    if (slot && *slot != *o.slot) return false;
    if (values.size() != o.values.size()) return false;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (normalize_value(values[i]) != normalize_value(o.values[i])) return false;
    }
    return true;
}

std::string make_snippet_id(const std::string& entity, int article_rank, int paragraph,
                            int sentence) {
    return entity + "|" + std::to_string(article_rank) + "|" + std::to_string(paragraph) + "|" +
           std::to_string(sentence);
}

const std::string& Turn::final_utterance() const {
    return (enriched && enriched_utterance) ? *enriched_utterance : utterance;
}

const KnowledgeSnippet* Dialogue::find_snippet(const std::string& snippet_id) const {
    for (const auto& s : snippet_pool) {
        if (s.id == snippet_id) return &s;
    }
    return nullptr;
}

void validate_dialogue(const Dialogue& d) {
    auto fail = [&](std::size_t turn_idx, const std::string& what) {
        throw ValidationError("dialogue '" + d.id + "' turn " + std::to_string(turn_idx) + ": " +
                              what);
    };
    if (d.id.empty()) throw ValidationError("dialogue with empty id");
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const Turn& t = d.turns[i];
        const Speaker expected = (i % 2 == 0) ? Speaker::kUser : Speaker::kSystem;
        if (t.speaker != expected) fail(i, "turns must alternate USER/SYSTEM starting with USER");
        if (t.enriched != !t.gold_snippet_ids.empty()) {
            fail(i, "gold_snippet_ids must be non-empty iff enriched");
        }
        if (t.gold_snippet_ids.size() > 3) fail(i, "at most 3 gold snippets per turn");
        if (t.enriched && t.speaker != Speaker::kSystem) fail(i, "only system turns are enriched");
        if (t.enriched && !t.enriched_utterance) fail(i, "enriched turn without enriched_utterance");
        if (t.db && t.db->match_count < static_cast<int>(t.db->records.size())) {
            fail(i, "db match_count smaller than carried records");
        }
        for (const auto& a : t.acts) {
            if (a.act.empty()) fail(i, "act with empty type");
            if (!a.values.empty() && !a.slot) fail(i, "act values without slot");
        }
    }
    // (name, domain) pairs deduplicated per dialogue
    for (std::size_t i = 0; i < d.entities.size(); ++i) {
        if (d.entities[i].name.empty()) throw ValidationError("dialogue '" + d.id + "': empty entity name");
        for (std::size_t j = i + 1; j < d.entities.size(); ++j) {
            if (normalize_value(d.entities[i].name) == normalize_value(d.entities[j].name) &&
                d.entities[i].domain == d.entities[j].domain) {
                throw ValidationError("dialogue '" + d.id + "': duplicate entity '" +
                                      d.entities[i].name + "'");
            }
        }
    }
}

const char* speaker_name(Speaker s) { return s == Speaker::kUser ? "USER" : "SYSTEM"; }

Speaker speaker_from_name(const std::string& name) {
    if (name == "USER" || name == "user") return Speaker::kUser;
    if (name == "SYSTEM" || name == "system") return Speaker::kSystem;
    throw ValidationError("unknown speaker '" + name + "'");
}

}  // namespace kgtod
