#pragma once
// Structured dialogue model: belief states, acts, database results, turns,
// dialogues, and knowledge snippets. Everything is immutable by convention
// after construction and safe to share across threads.

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kgtod/common.hpp"
#include "kgtod/text.hpp"

namespace kgtod {

enum class Speaker { kUser, kSystem };

// One (domain, slot, value) constraint. Domain and slot are identifiers;
// value is free text compared case-insensitively after whitespace
// normalization.
struct SlotValue {
    std::string domain;
    std::string slot;
    std::string value;

    SlotValue() = default;
    SlotValue(std::string d, std::string s, std::string v);

    bool same_key(const SlotValue& o) const { return domain == o.domain && slot == o.slot; }
    bool operator==(const SlotValue& o) const;
};

// Set of SlotValue with unique (domain, slot) keys, kept sorted by key so
// serialization order is a pure function of content.
class BeliefState {
public:
    BeliefState() = default;

    // Insert or overwrite the entry with the same (domain, slot).
    void set(SlotValue sv);
    const std::vector<SlotValue>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    const std::string* find(const std::string& domain, const std::string& slot) const;

    bool operator==(const BeliefState& o) const;

private:
    std::vector<SlotValue> entries_;
};

// One dialogue act. The act type is an open set of identifiers (INFORM,
// REQUEST, OFFER, ...). If values is non-empty a slot must be present.
struct DialogAct {
    std::string act;
    std::optional<std::string> slot;
    std::vector<std::string> values;

    DialogAct() = default;
    DialogAct(std::string a, std::optional<std::string> s = std::nullopt,
              std::vector<std::string> v = {});

    bool operator==(const DialogAct& o) const;
};

// Oracle database search result: total match count plus the carried
// records (usually truncated to the single offered one).
struct DbResult {
    std::string service;
    int match_count = 0;
    std::vector<std::map<std::string, std::string>> records;

    bool operator==(const DbResult& o) const = default;
};

struct Entity {
    std::string name;
    std::string domain;

    bool operator==(const Entity& o) const = default;
};

// One sentence of external knowledge with provenance. The id is the
// canonical string form "entity|articleRank|paragraph|sentence" for
// snippets produced by retrieval; ingested datasets may carry opaque ids.
struct KnowledgeSnippet {
    std::string id;
    std::string text;
    std::string source_title;

    bool operator==(const KnowledgeSnippet& o) const = default;
};

std::string make_snippet_id(const std::string& entity, int article_rank, int paragraph,
                            int sentence);

struct Turn {
    Speaker speaker = Speaker::kUser;
    std::string utterance;
    BeliefState belief;  // cumulative as of this turn
    std::vector<DialogAct> acts;
    std::optional<DbResult> db;
    bool enriched = false;
    std::vector<std::string> gold_snippet_ids;  // non-empty iff enriched
    std::optional<std::string> enriched_utterance;

    // The response as it appears in the conversation: the enriched
    // utterance when present, the plain one otherwise.
    const std::string& final_utterance() const;
};

struct Dialogue {
    std::string id;
    std::vector<std::string> domains;
    std::vector<Turn> turns;
    std::vector<Entity> entities;
    // Per-dialogue candidate snippet pool (the knowledge retrieved for the
    // dialogue's entities). Gold snippet ids reference into this pool.
    std::vector<KnowledgeSnippet> snippet_pool;

    const KnowledgeSnippet* find_snippet(const std::string& snippet_id) const;
};

// Throws ValidationError naming the dialogue id and turn index on the
// first violated invariant.
void validate_dialogue(const Dialogue& d);

const char* speaker_name(Speaker s);
Speaker speaker_from_name(const std::string& name);

}  // namespace kgtod
