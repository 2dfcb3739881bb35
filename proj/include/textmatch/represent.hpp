#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "textmatch/corpus.hpp"

namespace textmatch {

enum class RepKind { TDM, TOPIC, TOPIC_COARSE, EMBED, SCORE, COMPOSITE };

std::string rep_kind_name(RepKind k);

// N x p covariate matrix produced by a representation preset. TDM-backed
// representations stay sparse; everything else is dense.
struct Representation {
    RepKind kind = RepKind::TDM;
    std::string preset_name;
    std::vector<std::string> column_labels;
    bool is_sparse = false;

    Eigen::MatrixXd dense;                                      // when !is_sparse
    std::vector<std::vector<std::pair<int, double>>> sparse_rows;  // when is_sparse
    int sparse_cols = 0;

    // degenerate rows: empty document, zero vector, uniform fallback
    std::vector<std::uint8_t> row_flags;

    int rows() const {
        return is_sparse ? static_cast<int>(sparse_rows.size()) : static_cast<int>(dense.rows());
    }
    int cols() const { return is_sparse ? sparse_cols : static_cast<int>(dense.cols()); }

    double value(int i, int j) const;
    double row_squared_norm(int i) const;
    double row_dot(int i, int j) const;
    double row_squared_distance(int i, int j) const;
    Eigen::MatrixXd to_dense() const;
    bool flagged(int i) const {
        return i < static_cast<int>(row_flags.size()) && row_flags[i] != 0;
    }
};

Representation representation_from_tdm(const TermDocumentMatrix& tdm, const Vocabulary& vocab,
                                       const std::string& preset_name);
Representation dense_representation(Eigen::MatrixXd m, RepKind kind, std::string preset_name,
                                    std::vector<std::string> labels);

// TFIDF entry = tf * ln(N / df); TFIDF_L2 additionally rescales each nonzero
// row to unit Euclidean norm. Input must carry raw TF counts.
TermDocumentMatrix apply_weighting(const TermDocumentMatrix& tdm, Weighting scheme);

struct TdmPreset {
    std::string name;
    Weighting weighting;
    int min_df;   // 0 means unbounded (1)
    int max_df;   // 0 means unbounded (N)
};

const std::vector<TdmPreset>& tdm_presets();  // T1..T9
const TdmPreset& tdm_preset(const std::string& name);

Representation make_tdm_preset(const Corpus& corpus, const std::string& preset,
                               const TokenRules& rules = {}, int n_threads = 0);

struct EmbeddingTable {
    int dim = 0;
    std::unordered_map<std::string, std::vector<double>> vectors;
};

// Text lines "token v1 v2 ... vd" (the common pretrained-vector format).
EmbeddingTable load_embedding_table(const std::string& path);

// Row i = sum_t w(i,t) v_t / sum_t w(i,t) over tokens present in the table.
// Weights come from the supplied TDM (TF or TFIDF over the full vocabulary).
Representation embed_documents(const TermDocumentMatrix& weights, const Vocabulary& vocab,
                               const EmbeddingTable& table, const std::string& preset_name,
                               int n_threads = 0);
Representation embed_documents(const Corpus& corpus, const EmbeddingTable& table,
                               Weighting weighting, const std::string& preset_name,
                               const TokenRules& rules = {}, int n_threads = 0);

// Column-wise concatenation; all inputs must have the same row count.
Representation compose(const std::vector<const Representation*>& reps);

// Dense CSV with header = column_labels, rows in corpus order.
void write_representation(const Representation& rep, const std::string& path);

}  // namespace textmatch
