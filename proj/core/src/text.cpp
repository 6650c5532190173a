#include "kgtod/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace kgtod {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }

// A markup tag is "<...>" or "</...>" with an identifier body, optionally
// preceded by escape backslashes. Kept as one token.
bool looks_like_tag(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && s[i] == '\\') ++i;
    if (i + 2 > s.size() || s[i] != '<') return false;
    std::size_t j = i + 1;
    if (j < s.size() && s[j] == '/') ++j;
    if (j >= s.size() || s[j] == '>') return false;
    while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
    return j < s.size() && s[j] == '>' && j + 1 == s.size();
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && is_space(text[i])) ++i;
        if (i >= n) break;
        std::size_t j = i;
        while (j < n && !is_space(text[j])) ++j;
        std::string_view word = text.substr(i, j - i);
        if (looks_like_tag(word)) {
            out.emplace_back(word);
        } else {
            std::size_t k = 0;
            std::size_t start = 0;
            for (; k < word.size(); ++k) {
                if (is_punct(word[k])) {
                    if (k > start) out.emplace_back(word.substr(start, k - start));
                    out.emplace_back(1, word[k]);
                    start = k + 1;
                }
            }
            if (start < word.size()) out.emplace_back(word.substr(start));
        }
        i = j;
    }
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::string canonicalize(std::string_view text) {
    return join_tokens(tokenize(text));
}

std::string normalize_value(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = true;  // leading spaces dropped
    for (char c : s) {
        if (is_space(c)) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out += ' ';
            in_space = false;
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return out;
}

bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
    });
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

namespace {

// Fixed abbreviation list; a period after one of these never ends a sentence.
constexpr std::array<std::string_view, 16> kAbbrev = {
    "mr", "mrs", "ms", "dr", "st", "jr", "sr", "prof",
    "inc", "ltd", "co", "vs", "no", "etc", "approx", "dept",
};

bool ends_with_abbrev(std::string_view text, std::size_t dot_pos) {
    // word immediately before the '.'
    std::size_t end = dot_pos;
    std::size_t begin = end;
    while (begin > 0 && std::isalpha(static_cast<unsigned char>(text[begin - 1]))) --begin;
    if (begin == end) return false;
    std::string w = to_lower(text.substr(begin, end - begin));
    for (auto a : kAbbrev) {
        if (w == a) return true;
    }
    // single letters ("J. Smith") and dotted initialisms ("u.s.")
    if (end - begin == 1) return true;
    return begin >= 2 && text[begin - 1] == '.';
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view paragraph) {
    std::vector<std::string> out;
    std::size_t start = 0;
    const std::size_t n = paragraph.size();
    for (std::size_t i = 0; i < n; ++i) {
        char c = paragraph[i];
        if (c != '.' && c != '?' && c != '!') continue;
        if (c == '.' && ends_with_abbrev(paragraph, i)) continue;
        // require whitespace then an uppercase letter (quotes allowed between)
        std::size_t j = i + 1;
        while (j < n && (paragraph[j] == '.' || paragraph[j] == '?' || paragraph[j] == '!' ||
                         paragraph[j] == '"' || paragraph[j] == '\'')) {
            ++j;
        }
        if (j < n && !is_space(paragraph[j])) continue;
        std::size_t k = j;
        while (k < n && is_space(paragraph[k])) ++k;
        if (k < n && !(is_upper(paragraph[k]) || paragraph[k] == '"' || paragraph[k] == '\'')) {
            continue;
        }
        std::string sent(paragraph.substr(start, j - start));
        // trim
        while (!sent.empty() && is_space(sent.front())) sent.erase(sent.begin());
        while (!sent.empty() && is_space(sent.back())) sent.pop_back();
        if (!sent.empty()) out.push_back(std::move(sent));
        start = k;
        i = j > i ? j - 1 : i;
    }
    if (start < n) {
        std::string sent(paragraph.substr(start));
        while (!sent.empty() && is_space(sent.front())) sent.erase(sent.begin());
        while (!sent.empty() && is_space(sent.back())) sent.pop_back();
        if (!sent.empty()) out.push_back(std::move(sent));
    }
    return out;
}

}  // namespace kgtod
