#include "kgtod/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace kgtod::ir {

using nlohmann::json;

std::vector<Article> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open corpus file: " + path);
    std::vector<Article> out;
    std::string line;
    std::size_t offset = 0;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            offset += line.size() + 1;
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("corpus line " + std::to_string(lineno) + ": " + e.what(),
                             offset + e.byte);
        }
        Article a;
        a.title = j.at("title").get<std::string>();
        for (const auto& p : j.at("paragraphs")) a.paragraphs.push_back(p.get<std::string>());
        if (a.paragraphs.empty()) {
            throw ValidationError("corpus article '" + a.title + "' has no paragraphs");
        }
        out.push_back(std::move(a));
        offset += line.size() + 1;
    }
    return out;
}

void save_corpus(const std::vector<Article>& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write corpus file: " + path);
    for (const auto& a : corpus) {
        json j;
        j["title"] = a.title;
        j["paragraphs"] = a.paragraphs;
        out << j.dump() << "\n";
    }
}

std::vector<std::string> index_terms(std::string_view text) {
    std::vector<std::string> unigrams;
    for (const auto& t : tokenize(text)) unigrams.push_back(to_lower(t));
    std::vector<std::string> terms = unigrams;
    for (std::size_t i = 0; i + 1 < unigrams.size(); ++i) {
        terms.push_back(unigrams[i] + '\x1f' + unigrams[i + 1]);
    }
    return terms;
}

namespace {

std::map<std::string, int> term_counts(const std::string& text) {
    std::map<std::string, int> counts;
    for (const auto& t : index_terms(text)) ++counts[t];
    return counts;
}

std::string article_text(const Article& a) {
    std::string text = a.title;
    for (const auto& p : a.paragraphs) {
        text += ' ';
        text += p;
    }
    return text;
}

}  // namespace

CorpusIndex CorpusIndex::build(std::vector<Article> corpus) {
    if (corpus.empty()) throw ConfigError("CorpusIndex::build: empty corpus");
    {
        std::set<std::string> titles;
        for (const auto& a : corpus) {
            if (!titles.insert(a.title).second) {
                throw ValidationError("duplicate article title '" + a.title + "'");
            }
        }
    }
    CorpusIndex idx;
    idx.corpus_ = std::move(corpus);
    const std::size_t n_docs = idx.corpus_.size();

    // per-document term counts, term dictionary in first-seen order over
    // sorted per-doc maps (deterministic)
    std::vector<std::map<std::string, int>> doc_counts(n_docs);
    for (std::size_t d = 0; d < n_docs; ++d) {
        doc_counts[d] = term_counts(article_text(idx.corpus_[d]));
        for (const auto& [term, count] : doc_counts[d]) {
            (void)count;
            auto [it, inserted] =
                idx.term_ids_.try_emplace(term, static_cast<std::uint32_t>(idx.term_ids_.size()));
            (void)it;
            if (inserted) idx.doc_freq_.push_back(0);
        }
        for (const auto& [term, count] : doc_counts[d]) {
            (void)count;
            ++idx.doc_freq_[idx.term_ids_.at(term)];
        }
    }
    const std::size_t n_terms = idx.term_ids_.size();
    idx.idf_.resize(n_terms);
    for (std::size_t t = 0; t < n_terms; ++t) {
        const double n_t = static_cast<double>(idx.doc_freq_[t]);
        const double n = static_cast<double>(n_docs);
        idx.idf_[t] = std::max(0.0, std::log((n - n_t + 0.5) / (n_t + 0.5)));
    }
    idx.postings_.resize(n_terms);
    idx.doc_norm_.assign(n_docs, 0.0);
    for (std::size_t d = 0; d < n_docs; ++d) {
        double norm_sq = 0.0;
        for (const auto& [term, count] : doc_counts[d]) {
            const std::uint32_t t = idx.term_ids_.at(term);
            const double w = (1.0 + std::log(static_cast<double>(count))) * idx.idf_[t];
            norm_sq += w * w;
        }
        idx.doc_norm_[d] = std::sqrt(norm_sq);
        for (const auto& [term, count] : doc_counts[d]) {
            const std::uint32_t t = idx.term_ids_.at(term);
            const double w = (1.0 + std::log(static_cast<double>(count))) * idx.idf_[t];
            const double normalized = idx.doc_norm_[d] > 0.0 ? w / idx.doc_norm_[d] : 0.0;
            idx.postings_[t].emplace_back(static_cast<std::uint32_t>(d), normalized);
        }
    }
    return idx;
}

double CorpusIndex::idf(const std::string& term) const {
    auto it = term_ids_.find(term);
    return it == term_ids_.end() ? 0.0 : idf_[it->second];
}

std::vector<ScoredArticle> CorpusIndex::query(const std::string& text, int k) const {
    query_count_.fetch_add(1, std::memory_order_relaxed);

    std::map<std::string, int> counts = term_counts(text);
    // Query weights use the same idf formula over the corpus document
    // frequencies. Terms unseen in any document have n_t = 0, a positive
    // idf: they contribute to the query norm but never to a dot product.
    double query_norm_sq = 0.0;
    std::vector<std::pair<std::uint32_t, double>> qweights;
    const double n = static_cast<double>(corpus_.size());
    for (const auto& [term, count] : counts) {
        auto it = term_ids_.find(term);
        const double idf_t =
            it == term_ids_.end()
                ? std::max(0.0, std::log((n + 0.5) / 0.5))
                : idf_[it->second];
        const double w = (1.0 + std::log(static_cast<double>(count))) * idf_t;
        query_norm_sq += w * w;
        if (it != term_ids_.end() && w > 0.0) qweights.emplace_back(it->second, w);
    }
    if (qweights.empty() || query_norm_sq <= 0.0) return {};
    const double query_norm = std::sqrt(query_norm_sq);

    std::vector<double> scores(corpus_.size(), 0.0);
    for (const auto& [t, qw] : qweights) {
        for (const auto& [doc, dw] : postings_[t]) {
            scores[doc] += (qw / query_norm) * dw;
        }
    }
    std::vector<int> order;
    for (std::size_t d = 0; d < scores.size(); ++d) {
        if (scores[d] > 0.0) order.push_back(static_cast<int>(d));
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return corpus_[a].title < corpus_[b].title;
    });
    if (k >= 0 && static_cast<std::size_t>(k) < order.size()) order.resize(k);
    std::vector<ScoredArticle> out;
    out.reserve(order.size());
    for (int d : order) {
        out.push_back(ScoredArticle{&corpus_[d], d, scores[d]});
    }
    return out;
}

std::vector<ScoredArticle> CorpusIndex::retrieve(const Entity& entity) const {
    return query(entity.domain + " " + entity.name, 2);
}

std::vector<KnowledgeSnippet> chunk_snippets(const std::vector<const Article*>& articles,
                                             const Entity& entity) {
    std::vector<KnowledgeSnippet> out;
    for (std::size_t rank = 0; rank < articles.size(); ++rank) {
        const Article& a = *articles[rank];
        const std::size_t n_paras = std::min<std::size_t>(2, a.paragraphs.size());
        for (std::size_t p = 0; p < n_paras; ++p) {
            const auto sentences = split_sentences(a.paragraphs[p]);
            for (std::size_t s = 0; s < sentences.size(); ++s) {
                KnowledgeSnippet sn;
                sn.id = make_snippet_id(entity.name, static_cast<int>(rank),
                                        static_cast<int>(p), static_cast<int>(s));
                sn.text = sentences[s];
                sn.source_title = a.title;
                out.push_back(std::move(sn));
            }
        }
    }
    return out;
}

std::vector<KnowledgeSnippet> candidates_for_dialogue(const CorpusIndex& index,
                                                      const std::vector<Entity>& entities) {
    std::vector<KnowledgeSnippet> out;
    std::set<std::string> seen_text;
    for (const auto& e : entities) {
        std::vector<const Article*> hits;
        for (const auto& scored : index.retrieve(e)) hits.push_back(scored.article);
        for (auto& sn : chunk_snippets(hits, e)) {
            if (seen_text.insert(normalize_value(sn.text)).second) {
                out.push_back(std::move(sn));
            }
        }
    }
    return out;
}

}  // namespace kgtod::ir
