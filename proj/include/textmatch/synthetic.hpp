#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textmatch/corpus.hpp"

namespace textmatch {

struct KeywordConfounder {
    std::string token;
    double p_treated = 0.5;   // inclusion probability given group 1
    double p_control = 0.15;  // inclusion probability given group 0
    int repeats = 4;          // occurrences when present
};

struct SyntheticSpec {
    int n_treated = 600;
    int n_control = 600;
    int n_topics = 8;
    int words_per_topic = 60;
    int doc_length = 80;
    double dirichlet_alpha = 0.35;
    // topic-prevalence shift between groups; 0 = no confounding
    double confound_strength = 1.0;
    std::vector<KeywordConfounder> keywords;
    int n_numeric_covariates = 3;
    double numeric_shift = 0.4;  // group-1 mean shift of each numeric covariate
    std::vector<double> outcome_topic_coef;    // per topic, padded with 0
    std::vector<double> outcome_keyword_coef;  // per keyword, padded with 1
    double outcome_noise_sd = 1.0;
    std::uint64_t seed = 20240501;
};

SyntheticSpec default_confounded_spec();

struct SyntheticData {
    Corpus corpus;
    std::vector<std::vector<double>> true_topic_shares;      // per doc
    std::vector<std::vector<int>> keyword_present;           // per doc, per keyword
    std::vector<std::string> keyword_names;
};

// K-topic mixture corpus where group 1 oversamples the leading topics and
// planted keyword confounders appear at group-dependent rates; the outcome is
// a linear function of topic shares, keyword indicators, numeric covariates
// and noise. Numeric covariates are stored on the documents; keyword
// indicators are stored both in the text and as kw_* covariates so balance
// checks can target them.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// corpus.csv plus ground_truth.csv (true topic shares, keyword indicators).
void write_synthetic(const SyntheticData& data, const std::string& corpus_path,
                     const std::string& truth_path);

// Seeded random embedding table over a corpus vocabulary, one vector per
// term, written in the "token v1 ... vd" interchange format.
void write_random_embedding(const Corpus& corpus, int dim, std::uint64_t seed,
                            const std::string& path);

}  // namespace textmatch
