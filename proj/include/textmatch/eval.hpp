#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "textmatch/match.hpp"
#include "textmatch/rng.hpp"

namespace textmatch {

// The sampling frame: every unique matched pair (union over procedures),
// optionally extended with never-matched pairs for the out-of-match stages.
struct PairUniverse {
    std::vector<std::pair<int, int>> pairs;  // (treated_doc, control_doc)
    std::vector<int> frequency;              // F_i; 0 = never matched
    std::vector<double> predicted_quality;   // q-hat; empty if no model yet
    std::vector<std::vector<int>> procedure_pairs;  // R_j as indices into pairs
    std::vector<std::string> procedure_ids;

    int size() const { return static_cast<int>(pairs.size()); }
    int find_pair(int treated_doc, int control_doc) const;

    void rebuild_index();

private:
    std::unordered_map<std::uint64_t, int> index_;
};

PairUniverse make_universe(const std::vector<MatchedPairSet>& sets);

enum class StageKind { ProcedureQuota, FixedPairs, TierDraws, PilotWeighted };

struct DesignStage {
    StageKind kind = StageKind::ProcedureQuota;
    // ProcedureQuota: pairs drawn per procedure; TierDraws: pairs per quality
    // tier; PilotWeighted: total sample size.
    int count = 0;
    bool weight_by_prediction = true;    // ProcedureQuota
    std::vector<int> fixed_pairs;        // FixedPairs: universe indices
    double singleton_weight = 0.2;       // PilotWeighted: weight when F_i = 1
};

struct DesignSpec {
    std::vector<DesignStage> stages;
    // average pi estimates across groups of pairs with identical selection
    // probability (the quality tiers and fixed pairs)
    bool pool_equal_probability = true;
};

struct SamplingDesign {
    std::vector<double> pi;      // estimated inclusion probabilities
    std::vector<double> weight;  // 1 / pi; 0 when pi = 0 (excluded, flagged)
    int n_reps = 0;
    int never_selected = 0;  // pairs with estimated pi = 0
};

// One realization of the design: sorted unique universe indices.
std::vector<int> draw_sample(const PairUniverse& universe, const DesignSpec& spec, Rng& rng);

// Runs the design n_reps times; pi = selection frequency.
SamplingDesign simulate_inclusion(const PairUniverse& universe, const DesignSpec& spec,
                                  int n_reps, std::uint64_t seed);

struct EvaluatedPair {
    int pair_index = -1;  // universe index
    double mean_rating = 0.0;
    int m = 0;  // number of ratings
};

struct EvaluatedSet {
    std::vector<EvaluatedPair> pairs;
    std::unordered_map<int, int> by_pair;  // universe index -> position

    void add(int pair_index, double mean_rating, int m);
    const EvaluatedPair* find(int pair_index) const;
};

// Ratings CSV: pair_id,rater_id,score with optional excluded column;
// pair_id = "<treated_id>:<control_id>".
EvaluatedSet load_ratings(const std::string& path, const PairUniverse& universe,
                          const Corpus& corpus);

struct QualityEstimate {
    std::string procedure_id;
    int n_pairs = 0;
    int n_sampled = 0;
    std::optional<double> q_samp, q_adj, q_pred;
    std::optional<double> se_samp, se_adj;
    double z_weight = 0.0;  // Z_j
    bool insufficient_sample = false;  // nonempty R_j with no sampled pairs
    bool extrapolated = false;         // q_pred without any sampled pairs
};

// Hajek estimator over the sampled pairs of procedure j; procedures with no
// pairs at all report quality 0.
QualityEstimate hajek_quality(const PairUniverse& universe, int procedure,
                              const EvaluatedSet& evaluated, const SamplingDesign& design);

// Model-assisted estimate: mean prediction plus weighted residual correction.
// predictions holds q-hat for every universe pair (NaN = missing).
QualityEstimate adjusted_quality(const PairUniverse& universe, int procedure,
                                 const Eigen::VectorXd& predictions,
                                 const EvaluatedSet& evaluated, const SamplingDesign& design);

enum class BootstrapTarget { Raw, Adjusted };

// Parametric bootstrap: re-run the pair-sampling stage, attach synthetic
// scores (raw: center + noise) or synthetic residuals around the predictions
// (adjusted), recompute the estimator; SE = sd across replicates.
double bootstrap_se(BootstrapTarget target, const PairUniverse& universe, int procedure,
                    const DesignSpec& spec, const SamplingDesign& design,
                    const Eigen::VectorXd* predictions, double center, double noise_sd,
                    int n_boot, std::uint64_t seed);

void write_quality_csv(const std::vector<QualityEstimate>& estimates, const std::string& path);

struct EvaluationOptions {
    int inclusion_reps = 100000;
    int bootstrap_reps = 500;
    double raw_noise_sd = 2.37;       // within-procedure score SD default
    double residual_noise_sd = 1.6;   // prediction-residual SD default
    std::uint64_t seed = 0;
};

// Full estimator sweep: simulate inclusion probabilities, then for every
// procedure the Hajek estimate, the model-assisted estimate when predictions
// are supplied, and parametric-bootstrap standard errors for both.
std::vector<QualityEstimate> evaluate_procedures(const PairUniverse& universe,
                                                 const DesignSpec& spec,
                                                 const EvaluatedSet& evaluated,
                                                 const Eigen::VectorXd* predictions,
                                                 const EvaluationOptions& options);

struct RandTestResult {
    double t_obs = 0.0;
    std::vector<double> t_null;
    double p = 1.0;
};

// Appendix-style consistency test: T averages, across sources, the absolute
// shift in both outcome means between the full source and its matched sample;
// the null resamples sample_size documents per source uniformly.
RandTestResult randomization_test(const std::vector<double>& outcome_dem,
                                  const std::vector<double>& outcome_rep,
                                  const std::vector<std::string>& sources,
                                  const std::map<std::string, std::vector<int>>& matched_sample,
                                  int sample_size, int n_iter, std::uint64_t seed);

}  // namespace textmatch
