#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "textmatch/corpus.hpp"
#include "textmatch/distance.hpp"

namespace textmatch {

struct MatchedPair {
    int treated_doc = -1;  // corpus index
    int control_doc = -1;
    double distance = 0.0;
};

struct MatchedPairSet {
    std::vector<MatchedPair> pairs;
    std::string procedure_id;
    bool with_replacement = false;

    int size() const { return static_cast<int>(pairs.size()); }
};

// All pairs with distance <= caliper (one-to-many, with replacement).
// Treated units with no qualifying control are pruned.
MatchedPairSet caliper_match(const DistanceMatrix& dist, const Caliper& caliper);

// One-to-one assignment: maximum matched cardinality first, then minimum
// total distance, solved exactly. Pairs above the caliper are forbidden.
MatchedPairSet optimal_match(const DistanceMatrix& dist,
                             const Caliper& caliper = Caliper::unlimited());

// Forbids pairs whose propensity scores differ by more than
// ps_caliper_sd * sd(scores), then runs optimal_match on the text distances.
MatchedPairSet match_within_calipers(const DistanceMatrix& text_dist,
                                     const PropensityModel& ps, double ps_caliper_sd,
                                     const Caliper& text_caliper = Caliper::unlimited());

struct TemplateSample {
    std::vector<int> doc_indices;  // sorted corpus indices, unique
    std::map<std::string, double> label_distribution;
    double objective = 0.0;  // L1 gap to the corpus label distribution
};

// Draws n_candidates random samples of size n_template and keeps the one
// whose topic-label distribution is closest (L1) to the corpus distribution.
TemplateSample select_template(const Corpus& corpus,
                               const std::vector<std::string>& topic_labels, int n_template,
                               int n_candidates, std::uint64_t seed);

struct TemplateMatchResult {
    std::map<std::string, MatchedPairSet> per_source;
    // strata with too few source documents: source -> unmatched template ids
    std::map<std::string, std::vector<std::string>> unmatched;
};

// For every source, optimal pair matching of template documents to source
// documents restricted to equal primary-topic labels.
TemplateMatchResult template_match(const Representation& rep, Metric metric,
                                   const TemplateSample& tmpl,
                                   const std::vector<std::string>& sources,
                                   const std::vector<std::string>& topic_labels,
                                   const Corpus& corpus, const PairwiseOptions& opt = {});

void write_pairs_csv(const MatchedPairSet& set, const Corpus& corpus, const std::string& path);
MatchedPairSet read_pairs_csv(const std::string& path, const Corpus& corpus);

}  // namespace textmatch
