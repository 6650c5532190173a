#pragma once
// Local knowledge corpus and lexical retrieval: a unigram+bigram tf-idf
// inverted index, top-2 article lookup per entity query, and sentence-level
// snippet chunking of the first two paragraphs of each hit.

#include <atomic>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgtod/data.hpp"

namespace kgtod::ir {

struct Article {
    std::string title;
    std::vector<std::string> paragraphs;
};

// JSON-lines corpus file, one {"title", "paragraphs": [...]} per line.
std::vector<Article> load_corpus(const std::string& path);
void save_corpus(const std::vector<Article>& corpus, const std::string& path);

struct ScoredArticle {
    const Article* article = nullptr;
    int corpus_index = -1;
    double score = 0.0;
};

// Explicit-dictionary tf-idf index:
//   tf  = 1 + log(count)
//   idf = max(0, log((N - n_t + 0.5) / (n_t + 0.5)))
// Document vectors are L2-normalized; queries are scored by cosine
// similarity. Terms are lowercased unigrams and bigrams over the title and
// all paragraphs.
class CorpusIndex {
public:
    static CorpusIndex build(std::vector<Article> corpus);

    // Top-k articles by cosine similarity, ties broken by lexicographically
    // smaller title. Unknown-term-only queries return an empty list.
    std::vector<ScoredArticle> query(const std::string& text, int k) const;

    // query = domain + " " + entity name, top 2 articles.
    std::vector<ScoredArticle> retrieve(const Entity& entity) const;

    const std::vector<Article>& corpus() const { return corpus_; }
    std::size_t size() const { return corpus_.size(); }
    double idf(const std::string& term) const;

    // Total number of query()/retrieve() calls served; lets tests assert
    // that knowledge-free code paths never touch the index.
    std::uint64_t query_count() const { return query_count_.load(); }

    CorpusIndex(CorpusIndex&& o) noexcept
        : corpus_(std::move(o.corpus_)),
          term_ids_(std::move(o.term_ids_)),
          idf_(std::move(o.idf_)),
          doc_freq_(std::move(o.doc_freq_)),
          postings_(std::move(o.postings_)),
          doc_norm_(std::move(o.doc_norm_)),
          query_count_(o.query_count_.load()) {}
    CorpusIndex& operator=(CorpusIndex&& o) noexcept {
        corpus_ = std::move(o.corpus_);
        term_ids_ = std::move(o.term_ids_);
        idf_ = std::move(o.idf_);
        doc_freq_ = std::move(o.doc_freq_);
        postings_ = std::move(o.postings_);
        doc_norm_ = std::move(o.doc_norm_);
        query_count_.store(o.query_count_.load());
        return *this;
    }

private:
    CorpusIndex() = default;

    std::vector<Article> corpus_;
    std::unordered_map<std::string, std::uint32_t> term_ids_;
    std::vector<double> idf_;                       // per term id
    std::vector<std::uint32_t> doc_freq_;           // per term id
    // postings[t] = (doc, normalized tf-idf weight), sorted by doc
    std::vector<std::vector<std::pair<std::uint32_t, double>>> postings_;
    std::vector<double> doc_norm_;                  // L2 norm of raw weight vectors
    mutable std::atomic<std::uint64_t> query_count_{0};
};

// Lowercased unigram+bigram terms of a text; bigrams joined with '\x1f'.
std::vector<std::string> index_terms(std::string_view text);

// First min(2, available) paragraphs of each article, split into
// sentences; ids are (entity, article rank, paragraph, sentence).
std::vector<KnowledgeSnippet> chunk_snippets(const std::vector<const Article*>& articles,
                                             const Entity& entity);

// Union of chunk_snippets(retrieve(e)) over entities, deduplicated by
// normalized text, order preserved.
std::vector<KnowledgeSnippet> candidates_for_dialogue(const CorpusIndex& index,
                                                      const std::vector<Entity>& entities);

}  // namespace kgtod::ir
