#pragma once

#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "textmatch/match.hpp"

namespace textmatch {

struct StdDiffResult {
    double value = 0.0;       // (mean_T - mean_C) / s_pool
    double half_width = 0.0;  // 95% normal-approximation half-width (std-diff scale)
    bool undefined = false;   // s_pool = 0 with unequal means
};

// Pooled SD is always computed on the unmatched groups so before/after values
// share a denominator. With a pair set, means are taken over pair occurrences
// (controls weighted by reuse under with-replacement matching).
StdDiffResult standardized_diff(const std::vector<double>& values, const std::vector<int>& z,
                                const MatchedPairSet* pairs = nullptr);

struct BalanceRow {
    std::string covariate;
    StdDiffResult before;
    StdDiffResult after;
};

std::vector<BalanceRow> balance_report(const Corpus& corpus,
                                       const std::vector<std::string>& covariates,
                                       const MatchedPairSet& pairs);
void write_balance_csv(const std::vector<BalanceRow>& rows, const std::string& path);

// Kish formula over control reuse counts: (sum w)^2 / sum w^2. Equals the
// pair count for one-to-one sets.
double effective_sample_size(const MatchedPairSet& pairs);

struct ConceptMap {
    // corpus index -> concept identifiers; missing key = missing mapping
    std::unordered_map<int, std::set<std::string>> sets;
};

ConceptMap load_concept_map(const std::string& lexicon_path, const Corpus& corpus,
                            const TokenRules& rules);

struct JaccardResult {
    std::vector<double> per_pair;
    double mean = 0.0;
    int both_empty_flagged = 0;  // pairs scored 1 because both sets were empty
};

JaccardResult jaccard_quality(const MatchedPairSet& pairs, const ConceptMap& map,
                              const Corpus& corpus);

struct PairFrequencyTable {
    std::vector<std::pair<int, int>> pair_docs;  // (treated_doc, control_doc), sorted
    std::vector<int> frequency;                  // F_i, aligned with pair_docs
    std::vector<int> procedure_sizes;            // n_j
    std::vector<std::string> procedure_ids;
    int union_size() const { return static_cast<int>(pair_docs.size()); }
};

PairFrequencyTable pair_frequency(const std::vector<MatchedPairSet>& pair_sets);
void write_frequency_csv(const PairFrequencyTable& table, const Corpus& corpus,
                         const std::string& path);

}  // namespace textmatch
