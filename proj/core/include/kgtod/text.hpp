#pragma once
// Text primitives shared by the whole library: the canonical tokenizer,
// value normalization, and sentence splitting.

#include <string>
#include <string_view>
#include <vector>

namespace kgtod {

// Canonical tokenizer: every punctuation character becomes its own token,
// everything else splits on whitespace. Case is preserved. Used for
// statistics, BLEU, tf-idf terms and the word-level LM alike.
//
// Exception: tokens that look like markup tags ("<belief>", "</acts>",
// "\<chitchat>", ...) are kept whole so linearized sequences survive
// re-tokenization.
std::vector<std::string> tokenize(std::string_view text);

// Join tokens with single spaces (inverse of tokenize on canonical text).
std::string join_tokens(const std::vector<std::string>& tokens);

// Canonical form: tokenize then re-join. Idempotent.
std::string canonicalize(std::string_view text);

// Normalization used for all value comparisons: lowercase (ASCII), trim,
// collapse internal whitespace runs to single spaces.
std::string normalize_value(std::string_view s);

// True if s is a plain identifier: [A-Za-z0-9_.-]+, no whitespace.
bool is_identifier(std::string_view s);

// Sentence splitter: break on [.?!] followed by whitespace and an
// uppercase letter (or an opening quote before one), except after a known
// abbreviation. The abbreviation list is fixed and documented in
// docs/formats.md.
std::vector<std::string> split_sentences(std::string_view paragraph);

std::string to_lower(std::string_view s);

}  // namespace kgtod
