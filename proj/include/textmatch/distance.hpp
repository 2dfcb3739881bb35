#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "textmatch/logistic.hpp"
#include "textmatch/represent.hpp"

namespace textmatch {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Metric { Euclidean, Cosine, Mahalanobis };
std::string metric_name(Metric m);

struct DistanceMatrix {
    int n_treated = 0;
    int n_control = 0;
    std::vector<int> treated_docs;  // corpus indices, in corpus order
    std::vector<int> control_docs;
    std::vector<double> values;  // row-major n_treated x n_control, inf allowed
    std::string metric;
    std::string representation_preset;

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n_control + j]; }
    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * n_control + j]; }
    std::vector<double> finite_values() const;
};

struct PairwiseOptions {
    double ridge = -1.0;  // mahalanobis ridge; < 0 selects 1e-8 * trace(Sigma) / p
    int block_rows = 256; // treated rows per work block
    int n_threads = 0;
};

// Group vector semantics: 1 = treated, 0 = control, anything else excluded.
DistanceMatrix pairwise_distance(const Representation& rep, const std::vector<int>& z,
                                 Metric metric, const PairwiseOptions& opt = {});

// Same metrics over explicit row subsets (a document may appear on both
// sides). The mahalanobis covariance is still taken over all rows of rep.
DistanceMatrix pairwise_distance_subsets(const Representation& rep,
                                         const std::vector<int>& treated_docs,
                                         const std::vector<int>& control_docs, Metric metric,
                                         const PairwiseOptions& opt = {});

enum class ScoreScale { Raw, Logit };

DistanceMatrix score_distance(const PropensityModel& model, const std::vector<int>& z,
                              ScoreScale scale);

enum class Binning { EqualWidth, Quantile };

struct CoarseningRule {
    int bins = 2;                 // broadcast bin count, >= 1
    std::vector<int> per_column;  // optional per-column override
    Binning binning = Binning::EqualWidth;

    int bins_for(int column) const {
        return per_column.empty() ? bins : per_column[column];
    }
};

// Bin indices 0..B-1 per column. Equal-width bins span [min, max]; quantile
// bins use type-7 empirical quantiles with ties assigned to the lower bin.
Eigen::MatrixXi coarsen(const Representation& rep, const CoarseningRule& rule);

// 0 where every coarsened covariate agrees, inf otherwise.
DistanceMatrix cem_distance(const Eigen::MatrixXi& coarse, const std::vector<int>& z);

struct Caliper {
    double value = kInf;
    std::string rule = "none";

    static Caliper unlimited() { return {}; }
    static Caliper absolute(double v);
};

enum class CaliperRuleKind { Quantile, SdMultiple, Absolute };

struct CaliperRule {
    CaliperRuleKind kind = CaliperRuleKind::Absolute;
    double param = 0.0;

    static CaliperRule quantile(double q) { return {CaliperRuleKind::Quantile, q}; }
    static CaliperRule sd_multiple(double c) { return {CaliperRuleKind::SdMultiple, c}; }
    static CaliperRule absolute(double v) { return {CaliperRuleKind::Absolute, v}; }
};

Caliper derive_caliper(const DistanceMatrix& dist, const CaliperRule& rule);

// Type-7 quantile (linear interpolation) of the given values.
double quantile_type7(std::vector<double> values, double q);

}  // namespace textmatch
