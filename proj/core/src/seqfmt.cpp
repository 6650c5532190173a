#include "kgtod/seqfmt.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace kgtod::seq {

namespace {

const std::unordered_set<std::string>& reserved_set() {
    static const std::unordered_set<std::string> set(special_tokens().begin(),
                                                     special_tokens().end());
    return set;
}

std::vector<std::string> whitespace_split(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(std::move(tok));
    return out;
}

// Tokenize payload text canonically and escape reserved collisions.
std::vector<std::string> payload_tokens(std::string_view text) {
    std::vector<std::string> toks = tokenize(text);
    for (auto& t : toks) t = escape_payload_token(t);
    return toks;
}

void append_payload(std::vector<std::string>& out, std::string_view text) {
    for (auto& t : payload_tokens(text)) out.push_back(std::move(t));
}

std::string join(const std::vector<std::string>& toks) { return join_tokens(toks); }

}  // namespace

const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> toks = {
        kPadTag,       kBosTag,         kEosTag,        kUnkTag,       kContextOpen,
        kContextClose, kUserTag,        kSystemTag,     kBeliefOpen,   kBeliefClose,
        kSvOpen,       kSvClose,        kDbOpen,        kDbClose,      kFieldOpen,
        kFieldClose,   kActsOpen,       kActsClose,     kActOpen,      kActClose,
        kValueTag,     kKnowledgeOpen,  kKnowledgeClose, kSnippetOpen, kSnippetClose,
        kChitchatTag,  kNochitchatTag,  kResponseOpen,  kResponseClose,
    };
    return toks;
}

std::string escape_payload_token(const std::string& token) {
    std::size_t slashes = 0;
    while (slashes < token.size() && token[slashes] == '\\') ++slashes;
    if (reserved_set().count(token.substr(slashes))) return "\\" + token;
    return token;
}

std::string unescape_payload_token(const std::string& token) {
    if (token.empty() || token[0] != '\\') return token;
    std::size_t slashes = 0;
    while (slashes < token.size() && token[slashes] == '\\') ++slashes;
    if (reserved_set().count(token.substr(slashes))) return token.substr(1);
    return token;
}

const char* decision_token(Decision d) {
    return d == Decision::kChitchat ? kChitchatTag : kNochitchatTag;
}

std::string serialize_context(const std::vector<std::string>& context, int token_budget) {
    // Build per-utterance token runs (speaker marker + payload), then drop
    // whole runs from the front until the segment fits the budget.
    std::vector<std::vector<std::string>> runs;
    runs.reserve(context.size());
    for (std::size_t i = 0; i < context.size(); ++i) {
        std::vector<std::string> run;
        run.push_back(i % 2 == 0 ? kUserTag : kSystemTag);
        append_payload(run, context[i]);
        runs.push_back(std::move(run));
    }
    std::size_t total = 0;
    for (const auto& r : runs) total += r.size();
    std::size_t first = 0;
    while (first + 1 < runs.size() && total > static_cast<std::size_t>(token_budget)) {
        total -= runs[first].size();
        ++first;
    }
    std::vector<std::string> out;
    out.push_back(kContextOpen);
    for (std::size_t i = first; i < runs.size(); ++i) {
        auto& r = runs[i];
        if (i == first && total > static_cast<std::size_t>(token_budget) &&
            r.size() > static_cast<std::size_t>(token_budget)) {
            // single oversized utterance: keep the marker and the tail
            out.push_back(r.front());
            const std::size_t keep = static_cast<std::size_t>(token_budget) - 1;
            for (std::size_t k = r.size() - keep; k < r.size(); ++k) out.push_back(r[k]);
            continue;
        }
        out.insert(out.end(), r.begin(), r.end());
    }
    out.push_back(kContextClose);
    return join(out);
}

std::string serialize_belief(const BeliefState& b) {
    std::vector<std::string> out;
    out.push_back(kBeliefOpen);
    for (const auto& e : b.entries()) {  // already sorted by (domain, slot)
        out.push_back(kSvOpen);
        out.push_back(escape_payload_token(e.domain));
        out.push_back(escape_payload_token(e.slot));
        append_payload(out, e.value);
        out.push_back(kSvClose);
    }
    out.push_back(kBeliefClose);
    return join(out);
}

std::string serialize_db(const std::optional<DbResult>& db) {
    std::vector<std::string> out;
    out.push_back(kDbOpen);
    if (db) {
        out.push_back(escape_payload_token(db->service.empty() ? "none" : db->service));
        out.push_back(std::to_string(db->match_count));
        if (!db->records.empty()) {
            for (const auto& [field, value] : db->records.front()) {  // map: sorted by field
                out.push_back(kFieldOpen);
                out.push_back(escape_payload_token(field));
                append_payload(out, value);
                out.push_back(kFieldClose);
            }
        }
    }
    out.push_back(kDbClose);
    return join(out);
}

std::string serialize_acts(const std::vector<DialogAct>& acts) {
    std::vector<std::string> out;
    out.push_back(kActsOpen);
    for (const auto& a : acts) {  // original order
        out.push_back(kActOpen);
        out.push_back(escape_payload_token(a.act));
        if (a.slot) out.push_back(escape_payload_token(*a.slot));
        for (const auto& v : a.values) {
            out.push_back(kValueTag);
            append_payload(out, v);
        }
        out.push_back(kActClose);
    }
    out.push_back(kActsClose);
    return join(out);
}

std::string serialize_knowledge(const std::vector<KnowledgeSnippet>& snippets) {
    std::vector<std::string> out;
    out.push_back(kKnowledgeOpen);
    for (const auto& s : snippets) {
        out.push_back(kSnippetOpen);
        append_payload(out, s.text);
        out.push_back(kSnippetClose);
    }
    out.push_back(kKnowledgeClose);
    return join(out);
}

TrainingSequence linearize(const LinearizeInput& input, SequenceKind kind,
                           const LinearizeOptions& options) {
    const bool wants_knowledge =
        kind == SequenceKind::kFull || kind == SequenceKind::kResponsePrompt;
    if (wants_knowledge && input.snippets.size() != 3) {
        throw ContractError("linearize: kind requires exactly 3 knowledge snippets, got " +
                            std::to_string(input.snippets.size()));
    }
    std::vector<std::string> parts;
    parts.push_back(serialize_context(input.context, options.context_token_budget));
    if (kind != SequenceKind::kResponsePrompt) {
        parts.push_back(serialize_belief(input.belief));
        parts.push_back(serialize_db(input.db));
    }
    parts.push_back(serialize_acts(input.acts));
    if (wants_knowledge) parts.push_back(serialize_knowledge(input.snippets));
    if (wants_knowledge) parts.push_back(decision_token(input.decision));
    if (kind != SequenceKind::kTodOnly) {
        std::vector<std::string> resp;
        resp.push_back(kResponseOpen);
        append_payload(resp, input.response);
        resp.push_back(kResponseClose);
        parts.push_back(join(resp));
    }
    TrainingSequence ts;
    ts.kind = kind;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) ts.text += ' ';
        ts.text += parts[i];
    }
    return ts;
}

namespace {

struct TokenStream {
    const std::vector<std::string>& toks;
    std::size_t pos = 0;
    bool done() const { return pos >= toks.size(); }
    const std::string& peek() const { return toks[pos]; }
    const std::string& next() { return toks[pos++]; }
};

// Collect payload tokens until `close` (consumed) or any reserved opener,
// which signals a malformed segment.
std::vector<std::string> collect_until(TokenStream& s, const std::string& close, bool& clean) {
    std::vector<std::string> out;
    clean = false;
    while (!s.done()) {
        const std::string& t = s.peek();
        if (t == close) {
            s.next();
            clean = true;
            break;
        }
        out.push_back(s.next());
    }
    return out;
}

std::string join_unescaped(const std::vector<std::string>& toks, std::size_t begin,
                           std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end && i < toks.size(); ++i) {
        if (!out.empty()) out += ' ';
        out += unescape_payload_token(toks[i]);
    }
    return out;
}

void parse_belief_payload(const std::vector<std::string>& toks, DecodeOutput& out) {
    std::size_t i = 0;
    while (i < toks.size()) {
        if (toks[i] != kSvOpen) {
            out.parse_warnings.push_back("belief: unexpected token '" + toks[i] + "'");
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < toks.size() && toks[j] != kSvClose) ++j;
        // entry = [domain, slot, value...]
        if (j - i - 1 >= 2) {
            const std::string domain = unescape_payload_token(toks[i + 1]);
            const std::string slot = unescape_payload_token(toks[i + 2]);
            const std::string value = join_unescaped(toks, i + 3, j);
            try {
                out.belief.set(SlotValue(domain, slot, value));
            } catch (const ValidationError& e) {
                out.parse_warnings.push_back(std::string("belief: ") + e.what());
            }
        } else {
            out.parse_warnings.push_back("belief: incomplete entry");
        }
        if (j >= toks.size()) {
            out.parse_warnings.push_back("belief: unterminated entry");
            break;
        }
        i = j + 1;
    }
}

void parse_acts_payload(const std::vector<std::string>& toks, DecodeOutput& out) {
    std::size_t i = 0;
    while (i < toks.size()) {
        if (toks[i] != kActOpen) {
            out.parse_warnings.push_back("acts: unexpected token '" + toks[i] + "'");
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < toks.size() && toks[j] != kActClose) ++j;
        std::size_t k = i + 1;
        if (k < j) {
            const std::string act = unescape_payload_token(toks[k++]);
            std::optional<std::string> slot;
            if (k < j && toks[k] != kValueTag) slot = unescape_payload_token(toks[k++]);
            std::vector<std::string> values;
            while (k < j && toks[k] == kValueTag) {
                std::size_t v = k + 1;
                while (v < j && toks[v] != kValueTag) ++v;
                values.push_back(join_unescaped(toks, k + 1, v));
                k = v;
            }
            try {
                out.acts.emplace_back(act, std::move(slot), std::move(values));
            } catch (const ValidationError& e) {
                out.parse_warnings.push_back(std::string("acts: ") + e.what());
            }
        } else {
            out.parse_warnings.push_back("acts: empty act");
        }
        if (j >= toks.size()) {
            out.parse_warnings.push_back("acts: unterminated act");
            break;
        }
        i = j + 1;
    }
}

}  // namespace

DecodeOutput parse_decode(const std::string& text, SequenceKind kind) {
    DecodeOutput out;
    const std::vector<std::string> toks = whitespace_split(text);
    TokenStream s{toks};

    bool saw_decision = false;
    bool saw_response = false;
    const bool expects_decision =
        kind == SequenceKind::kFull || kind == SequenceKind::kResponsePrompt;

    while (!s.done()) {
        const std::string& t = s.next();
        if (t == kBeliefOpen) {
            bool clean = false;
            auto payload = collect_until(s, kBeliefClose, clean);
            if (!clean) out.parse_warnings.push_back("unterminated belief segment");
            parse_belief_payload(payload, out);
        } else if (t == kActsOpen) {
            bool clean = false;
            auto payload = collect_until(s, kActsClose, clean);
            if (!clean) out.parse_warnings.push_back("unterminated acts segment");
            parse_acts_payload(payload, out);
        } else if (t == kChitchatTag || t == kNochitchatTag) {
            if (!saw_decision) {
                out.decision = (t == kChitchatTag) ? Decision::kChitchat : Decision::kNochitchat;
                saw_decision = true;
            }
        } else if (t == kResponseOpen) {
            bool clean = false;
            auto payload = collect_until(s, kResponseClose, clean);
            if (!clean) out.parse_warnings.push_back("truncated response segment");
            if (!saw_response) {
                out.response = join_unescaped(payload, 0, payload.size());
                saw_response = true;
            }
        } else if (t == kContextOpen) {
            bool clean = false;
            collect_until(s, kContextClose, clean);
            if (!clean) out.parse_warnings.push_back("unterminated context segment");
        } else if (t == kDbOpen) {
            bool clean = false;
            collect_until(s, kDbClose, clean);
            if (!clean) out.parse_warnings.push_back("unterminated db segment");
        } else if (t == kKnowledgeOpen) {
            bool clean = false;
            collect_until(s, kKnowledgeClose, clean);
            if (!clean) out.parse_warnings.push_back("unterminated knowledge segment");
        } else if (t == kBosTag || t == kEosTag || t == kPadTag) {
            continue;
        } else {
            // stray token outside any segment; note once per run
            if (out.parse_warnings.empty() ||
                out.parse_warnings.back().rfind("stray", 0) != 0) {
                out.parse_warnings.push_back("stray token outside segments: '" + t + "'");
            }
        }
    }
    if (expects_decision && !saw_decision) {
        out.parse_warnings.push_back("missing decision token, defaulting to <nochitchat>");
        out.decision = Decision::kNochitchat;
    }
    return out;
}

std::vector<std::string> merge_snippets(const std::vector<std::string>& gold_ids,
                                        const std::vector<std::string>& ranked_ids) {
    if (gold_ids.size() > 3) {
        throw ContractError("merge_snippets: more than 3 gold snippet ids");
    }
    std::vector<std::string> out;
    auto push_unique = [&](const std::string& id) {
        if (out.size() >= 3) return;
        if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    };
    for (const auto& g : gold_ids) push_unique(g);
    for (const auto& r : ranked_ids) push_unique(r);
    if (out.size() < 3) {
        throw ContractError("merge_snippets: fewer than 3 distinct snippet ids available");
    }
    return out;
}

}  // namespace kgtod::seq
