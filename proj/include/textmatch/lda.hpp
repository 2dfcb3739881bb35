#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "textmatch/corpus.hpp"
#include "textmatch/represent.hpp"

namespace textmatch {

struct TopicModel {
    int K = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    int iterations = 0;
    Eigen::MatrixXd doc_topic;   // N x K, rows on the simplex
    Eigen::MatrixXd topic_word;  // K x V, rows on the simplex; empty for loaded matrices
    bool has_topic_word = false;
    std::vector<std::uint8_t> empty_doc;  // zero retained tokens -> uniform row
};

// Collapsed Gibbs sampling over the raw-count TDM. doc_topic / topic_word are
// Dirichlet-smoothed posterior means averaged over the final `average_last`
// sweeps. Deterministic given seed (single sampling thread).
TopicModel fit_topic_model(const TermDocumentMatrix& tdm, int K, double alpha, double beta,
                           int iterations, std::uint64_t seed, int average_last = 100);

// N x K CSV of documents-by-topic proportions, no header; rows must sum to
// 1 within 1e-6.
TopicModel load_topic_matrix(const std::string& path);

// S1-style representation: the theta matrix as covariates.
Representation topic_representation(const TopicModel& model, const std::string& preset_name);

// S3 construction: keep the 3 largest proportions renormalized to sum to 1,
// zero the rest, and append the focus column (raw top-3 sum). K+1 columns.
Representation coarsen_topics(const TopicModel& model);

}  // namespace textmatch
