#pragma once
// Loss-free linearization between the structured dialogue model and the
// flat training / decoding sequences, including the chit-chat decision
// tokens. The grammar is versioned and documented in docs/grammar.md;
// fixtures pin byte-exact serializations.

#include <optional>
#include <string>
#include <vector>

#include "kgtod/data.hpp"

namespace kgtod::seq {

// Which segments a sequence carries:
//   kFull           [C, B, D, A, K, decision, T]   (end-to-end with knowledge)
//   kTodOnly        [C, B, D, A]                   (pipeline TOD model)
//   kResponsePrompt [C, A, K, decision, T]         (pipeline response model)
//   kBaseline       [C, B, D, A, T]                (no knowledge, no decision)
enum class SequenceKind { kFull, kTodOnly, kResponsePrompt, kBaseline };

enum class Decision { kChitchat, kNochitchat };

struct TrainingSequence {
    SequenceKind kind = SequenceKind::kFull;
    std::string text;
    std::string dialogue_id;
    int turn_index = -1;
};

struct DecodeOutput {
    BeliefState belief;
    std::vector<DialogAct> acts;
    Decision decision = Decision::kNochitchat;
    std::string response;
    std::vector<std::string> parse_warnings;
};

struct LinearizeInput {
    std::vector<std::string> context;  // oldest first, USER speaks first
    BeliefState belief;
    std::optional<DbResult> db;
    std::vector<DialogAct> acts;
    std::vector<KnowledgeSnippet> snippets;
    Decision decision = Decision::kNochitchat;
    std::string response;
};

struct LinearizeOptions {
    // Whole utterances are dropped from the front of the context until the
    // context segment fits this many tokens.
    int context_token_budget = 512;
};

// Serializes per the canonical grammar. Kinds kFull and kResponsePrompt
// require exactly 3 snippets; kTodOnly ignores snippets/decision/response.
// Throws ContractError on violated requirements.
TrainingSequence linearize(const LinearizeInput& input, SequenceKind kind,
                           const LinearizeOptions& options = {});

// Best-effort structured recovery from arbitrary decoded text. Total:
// never throws, malformed segments yield empty structures plus warnings.
DecodeOutput parse_decode(const std::string& text, SequenceKind kind);

// Gold ids first (annotation order), then ranked ids in score order,
// duplicates removed, truncated to exactly 3. Throws ContractError when
// fewer than 3 distinct ids are available.
std::vector<std::string> merge_snippets(const std::vector<std::string>& gold_ids,
                                        const std::vector<std::string>& ranked_ids);

// --- segment-level helpers (used by the pipeline to assemble prompts) ---

std::string serialize_context(const std::vector<std::string>& context, int token_budget = 512);
std::string serialize_belief(const BeliefState& b);
std::string serialize_db(const std::optional<DbResult>& db);
std::string serialize_acts(const std::vector<DialogAct>& acts);
// Prompt assembly tolerates 0..3 snippets; only training sequences demand 3.
std::string serialize_knowledge(const std::vector<KnowledgeSnippet>& snippets);
const char* decision_token(Decision d);

// All reserved grammar tokens (segment delimiters, markers, decision tags,
// plus <bos>/<eos>/<pad>/<unk>). Stable order.
const std::vector<std::string>& special_tokens();

// One payload token -> escaped form (reserved tokens get a '\' prefix).
std::string escape_payload_token(const std::string& token);
std::string unescape_payload_token(const std::string& token);

inline const char* kContextOpen = "<context>";
inline const char* kContextClose = "</context>";
inline const char* kUserTag = "<user>";
inline const char* kSystemTag = "<system>";
inline const char* kBeliefOpen = "<belief>";
inline const char* kBeliefClose = "</belief>";
inline const char* kSvOpen = "<sv>";
inline const char* kSvClose = "</sv>";
inline const char* kDbOpen = "<db>";
inline const char* kDbClose = "</db>";
inline const char* kFieldOpen = "<f>";
inline const char* kFieldClose = "</f>";
inline const char* kActsOpen = "<acts>";
inline const char* kActsClose = "</acts>";
inline const char* kActOpen = "<act>";
inline const char* kActClose = "</act>";
inline const char* kValueTag = "<v>";
inline const char* kKnowledgeOpen = "<knowledge>";
inline const char* kKnowledgeClose = "</knowledge>";
inline const char* kSnippetOpen = "<k>";
inline const char* kSnippetClose = "</k>";
inline const char* kChitchatTag = "<chitchat>";
inline const char* kNochitchatTag = "<nochitchat>";
inline const char* kResponseOpen = "<response>";
inline const char* kResponseClose = "</response>";
inline const char* kBosTag = "<bos>";
inline const char* kEosTag = "<eos>";
inline const char* kPadTag = "<pad>";
inline const char* kUnkTag = "<unk>";

}  // namespace kgtod::seq
