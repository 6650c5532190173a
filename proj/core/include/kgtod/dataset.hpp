#pragma once
// Dataset ingestion (SGD / KETOD-style JSON), persistence, domain/entity
// filtering, entity extraction and corpus-level statistics.
//
// The exact field mapping is documented in docs/formats.md and pinned by
// fixtures; everything dataset-format-specific lives in this one adapter.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kgtod/data.hpp"

namespace kgtod {

enum class DatasetFormat { kSgd, kKetod };

std::vector<Dialogue> load_dataset(const std::string& path, DatasetFormat format);
void save_dataset(const std::vector<Dialogue>& ds, const std::string& path);

// Per-domain designation of which slots carry entity names.
using EntitySlotConfig = std::map<std::string, std::vector<std::string>>;

// One Entity per distinct (value, domain) where the value appears in a
// designated slot of any belief state or act; first-appearance order.
// When the dialogue already carries entity annotations those take
// precedence and are returned unchanged.
std::vector<Entity> extract_entities(const Dialogue& d, const EntitySlotConfig& config);

// Same extraction over a single (belief, acts) pair, e.g. generated TOD
// results at inference time. Act slots are resolved against default_domain.
std::vector<Entity> extract_entities(const BeliefState& belief,
                                     const std::vector<DialogAct>& acts,
                                     const std::string& default_domain,
                                     const EntitySlotConfig& config);

struct FilterOptions {
    // Compared against the domain name lowercased with any trailing "_<n>"
    // service suffix stripped ("Banks_2" -> "banks").
    std::vector<std::string> excluded_domains = {"alarm", "banks", "payment"};
    int max_entities = 10;
};

// Drops dialogues containing an excluded domain or more than max_entities
// entities. Never reorders; idempotent.
std::vector<Dialogue> filter_dialogues(const std::vector<Dialogue>& ds,
                                       const FilterOptions& options = {});

struct DatasetStats {
    std::int64_t dialogues = 0;
    std::int64_t turns = 0;
    std::int64_t enriched_turns = 0;
    std::int64_t system_turns = 0;
    std::int64_t distinct_entities = 0;        // distinct (name, domain) across the set
    std::int64_t distinct_snippets = 0;        // distinct pooled snippet ids across the set
    std::int64_t vocabulary = 0;               // distinct tokens over all utterances
    std::optional<double> avg_turns_per_dialogue;
    std::optional<double> avg_entities_per_dialogue;
    std::optional<double> avg_snippets_per_dialogue;  // mean per-dialogue pool size
    std::optional<double> avg_tokens_enriched_response;
    std::optional<double> enriched_system_turn_fraction;

    std::string to_json() const;
    std::string to_table() const;
};

DatasetStats dataset_stats(const std::vector<Dialogue>& ds);

}  // namespace kgtod
