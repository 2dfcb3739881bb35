#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace textmatch {

struct Document {
    std::string id;
    int group = 0;              // 0/1 for binary studies, -1 when only a categorical label applies
    std::string group_label;    // source label for multi-group studies ("0"/"1" for binary)
    std::string text;
    std::map<std::string, double> covariates;
    std::optional<double> outcome;
};

struct Corpus {
    std::vector<Document> documents;
    int n_treated = 0;
    int n_control = 0;
    bool binary = true;

    int size() const { return static_cast<int>(documents.size()); }
    std::vector<int> group_vector() const;
    std::vector<int> treated_indices() const;
    std::vector<int> control_indices() const;
    int index_of(const std::string& id) const;  // -1 if absent

    void finalize();  // validates ids, fills counts and the id index

private:
    std::unordered_map<std::string, int> id_index_;
};

struct TokenRules {
    bool lowercase = true;
    bool strip_punctuation = true;
    int ngram = 1;  // 1 = unigrams, 2 = unigrams + bigrams, ...
    std::set<std::string> stopwords;
};

struct Vocabulary {
    std::vector<std::string> terms;   // unique, lowercase, lexicographically sorted
    std::vector<int> doc_frequency;   // per retained term
    int n_docs = 0;
    int min_df = 1;
    int max_df = 0;

    int size() const { return static_cast<int>(terms.size()); }
    int index_of(const std::string& term) const;  // -1 if absent

    void build_index();

private:
    std::unordered_map<std::string, int> index_;
};

enum class Weighting { TF, TFIDF, TFIDF_L2 };

std::string weighting_name(Weighting w);

// Sparse row-major term-document matrix. Rows hold (term index, value)
// pairs sorted by term index.
struct TermDocumentMatrix {
    int n_docs = 0;
    int n_terms = 0;
    Weighting weighting = Weighting::TF;
    int min_df = 1;
    int max_df = 0;
    std::vector<std::vector<std::pair<int, double>>> rows;
    std::vector<int> doc_frequency;  // per column, copied from the vocabulary
    bool zero_matrix_warning = false;

    double row_sum(int i) const;
    double row_norm(int i) const;
};

struct FieldMap {
    std::string id = "id";
    std::string group = "group";
    std::string text = "text";
    std::vector<std::string> covariates;
    std::string outcome;  // empty = none
};

enum class CorpusFormat { CSV, JSONL };

Corpus ingest_corpus(const std::string& path, CorpusFormat format, const FieldMap& fields);

std::vector<std::string> tokenize(const std::string& text, const TokenRules& rules);

Vocabulary build_vocabulary(const Corpus& corpus, const TokenRules& rules, int min_df, int max_df);

TermDocumentMatrix build_tdm(const Corpus& corpus, const Vocabulary& vocab,
                             const TokenRules& rules, int n_threads = 0);

// Sparse triplet export (row_id, term, value) plus a vocabulary sidecar
// listing terms in column order.
void write_tdm(const TermDocumentMatrix& tdm, const Corpus& corpus, const Vocabulary& vocab,
               const std::string& triplet_path, const std::string& vocab_path);

}  // namespace textmatch
