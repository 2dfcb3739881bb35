#include "textmatch/distance.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "textmatch/errors.hpp"
#include "textmatch/parallel.hpp"

namespace textmatch {

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::Euclidean: return "euclidean";
        case Metric::Cosine: return "cosine";
        case Metric::Mahalanobis: return "mahalanobis";
    }
    return "?";
}

std::vector<double> DistanceMatrix::finite_values() const {
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values)
        if (std::isfinite(v)) out.push_back(v);
    return out;
}

namespace {

void split_groups(const std::vector<int>& z, std::vector<int>& treated,
                  std::vector<int>& control) {
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i] == 1)
            treated.push_back(static_cast<int>(i));
        else if (z[i] == 0)
            control.push_back(static_cast<int>(i));
    }
    if (treated.empty() || control.empty())
        throw ShapeError("pairwise distance requires both groups nonempty");
}

}  // namespace

DistanceMatrix pairwise_distance(const Representation& rep, const std::vector<int>& z,
                                 Metric metric, const PairwiseOptions& opt) {
    if (static_cast<int>(z.size()) != rep.rows())
        throw ShapeError("group vector length does not match representation rows");
    std::vector<int> treated, control;
    split_groups(z, treated, control);
    return pairwise_distance_subsets(rep, treated, control, metric, opt);
}

DistanceMatrix pairwise_distance_subsets(const Representation& rep,
                                         const std::vector<int>& treated_docs,
                                         const std::vector<int>& control_docs, Metric metric,
                                         const PairwiseOptions& opt) {
    if (treated_docs.empty() || control_docs.empty())
        throw ShapeError("pairwise distance requires both groups nonempty");
    DistanceMatrix dist;
    dist.treated_docs = treated_docs;
    dist.control_docs = control_docs;
    dist.n_treated = static_cast<int>(dist.treated_docs.size());
    dist.n_control = static_cast<int>(dist.control_docs.size());
    dist.metric = metric_name(metric);
    dist.representation_preset = rep.preset_name;
    dist.values.assign(static_cast<std::size_t>(dist.n_treated) * dist.n_control, 0.0);

    const int n_blocks =
        (dist.n_treated + opt.block_rows - 1) / std::max(1, opt.block_rows);

    if (metric == Metric::Cosine || metric == Metric::Euclidean) {
        std::vector<double> sq_norm(rep.rows());
        for (int i = 0; i < rep.rows(); ++i) sq_norm[i] = rep.row_squared_norm(i);

        parallel_for(n_blocks, opt.n_threads, [&](int b) {
            const int lo = b * opt.block_rows;
            const int hi = std::min(dist.n_treated, lo + opt.block_rows);
            for (int i = lo; i < hi; ++i) {
                const int ti = dist.treated_docs[i];
                for (int j = 0; j < dist.n_control; ++j) {
                    const int cj = dist.control_docs[j];
                    double d;
                    if (metric == Metric::Euclidean) {
                        d = std::sqrt(std::max(0.0, rep.row_squared_distance(ti, cj)));
                    } else {
                        const double denom = std::sqrt(sq_norm[ti]) * std::sqrt(sq_norm[cj]);
                        if (denom == 0.0)
                            d = 1.0;  // zero vector: maximal dissimilarity by definition
                        else
                            d = std::max(0.0, 1.0 - rep.row_dot(ti, cj) / denom);
                    }
                    dist.at(i, j) = d;
                }
            }
        });
        return dist;
    }

    // Mahalanobis: Sigma over all N rows (denominator N-1), ridge regularized,
    // distances computed as squared Euclidean in the whitened space.
    const Eigen::MatrixXd x = rep.to_dense();
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    if (n < 2) throw ShapeError("mahalanobis needs at least two documents");
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    Eigen::MatrixXd sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
    double ridge = opt.ridge;
    if (ridge < 0.0) ridge = 1e-8 * sigma.trace() / p;
    sigma.diagonal().array() += ridge;

    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0)) {
        if (opt.ridge == 0.0)
            throw SingularCovariance(
                "covariance matrix is singular; rerun with ridge > 0");
        throw SingularCovariance("covariance matrix is singular even after ridge");
    }

    // whiten: y_i = L^-1 x_i, then D_ij = ||y_i - y_j||^2 (the squared form)
    Eigen::MatrixXd whitened =
        llt.matrixL().solve(centered.transpose());  // p x N

    parallel_for(n_blocks, opt.n_threads, [&](int b) {
        const int lo = b * opt.block_rows;
        const int hi = std::min(dist.n_treated, lo + opt.block_rows);
        for (int i = lo; i < hi; ++i) {
            const auto yi = whitened.col(dist.treated_docs[i]);
            for (int j = 0; j < dist.n_control; ++j)
                dist.at(i, j) = (yi - whitened.col(dist.control_docs[j])).squaredNorm();
        }
    });
    return dist;
}

DistanceMatrix score_distance(const PropensityModel& model, const std::vector<int>& z,
                              ScoreScale scale) {
    if (static_cast<int>(z.size()) != model.scores.size())
        throw ShapeError("group vector length does not match fitted scores");
    DistanceMatrix dist;
    split_groups(z, dist.treated_docs, dist.control_docs);
    dist.n_treated = static_cast<int>(dist.treated_docs.size());
    dist.n_control = static_cast<int>(dist.control_docs.size());
    dist.metric = scale == ScoreScale::Raw ? "propensity" : "propensity_logit";
    dist.values.resize(static_cast<std::size_t>(dist.n_treated) * dist.n_control);
    // logit(scores) is the linear predictor
    const Eigen::VectorXd& s = scale == ScoreScale::Raw ? model.scores : model.linear;
    for (int i = 0; i < dist.n_treated; ++i)
        for (int j = 0; j < dist.n_control; ++j)
            dist.at(i, j) = std::abs(s[dist.treated_docs[i]] - s[dist.control_docs[j]]);
    return dist;
}

double quantile_type7(std::vector<double> values, double q) {
    if (values.empty()) throw NoFiniteDistances("no values for quantile");
    std::sort(values.begin(), values.end());
    if (q <= 0.0) return values.front();
    if (q >= 1.0) return values.back();
    const double h = (values.size() - 1) * q;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

Eigen::MatrixXi coarsen(const Representation& rep, const CoarseningRule& rule) {
    const int n = rep.rows();
    const int p = rep.cols();
    if (!rule.per_column.empty() && static_cast<int>(rule.per_column.size()) != p)
        throw ShapeError("per-column bin counts do not match column count");
    const Eigen::MatrixXd x = rep.to_dense();
    if (!x.allFinite()) throw DataError("coarsen requires finite entries");
    Eigen::MatrixXi out(n, p);

    std::vector<double> col(n);
    for (int j = 0; j < p; ++j) {
        const int b = rule.bins_for(j);
        if (b < 1) throw ConfigError("bin count must be >= 1");
        if (b == 1) {
            out.col(j).setZero();
            continue;
        }
        for (int i = 0; i < n; ++i) col[i] = x(i, j);
        if (rule.binning == Binning::EqualWidth) {
            const double lo = *std::min_element(col.begin(), col.end());
            const double hi = *std::max_element(col.begin(), col.end());
            const double width = (hi - lo) / b;
            for (int i = 0; i < n; ++i) {
                int bin = width > 0.0 ? static_cast<int>((col[i] - lo) / width) : 0;
                out(i, j) = std::clamp(bin, 0, b - 1);
            }
        } else {
            std::vector<double> boundaries(b - 1);
            for (int k = 1; k < b; ++k)
                boundaries[k - 1] = quantile_type7(col, static_cast<double>(k) / b);
            for (int i = 0; i < n; ++i) {
                int bin = 0;
                for (double q : boundaries)
                    if (q < col[i]) ++bin;  // ties assigned to the lower bin
                out(i, j) = bin;
            }
        }
    }
    return out;
}

DistanceMatrix cem_distance(const Eigen::MatrixXi& coarse, const std::vector<int>& z) {
    if (static_cast<int>(z.size()) != coarse.rows())
        throw ShapeError("group vector length does not match coarsened rows");
    DistanceMatrix dist;
    split_groups(z, dist.treated_docs, dist.control_docs);
    dist.n_treated = static_cast<int>(dist.treated_docs.size());
    dist.n_control = static_cast<int>(dist.control_docs.size());
    dist.metric = "cem";
    dist.values.resize(static_cast<std::size_t>(dist.n_treated) * dist.n_control);

    // hash each row's bin signature so comparisons are O(1)
    std::unordered_map<std::string, int> stratum_of;
    std::vector<int> stratum(coarse.rows());
    std::string key;
    for (int i = 0; i < coarse.rows(); ++i) {
        key.assign(reinterpret_cast<const char*>(coarse.row(i).eval().data()),
                   sizeof(int) * coarse.cols());
        // row(i).eval() materializes the row so the byte view is contiguous
        auto [it, inserted] = stratum_of.emplace(key, static_cast<int>(stratum_of.size()));
        stratum[i] = it->second;
    }
    for (int i = 0; i < dist.n_treated; ++i)
        for (int j = 0; j < dist.n_control; ++j)
            dist.at(i, j) =
                stratum[dist.treated_docs[i]] == stratum[dist.control_docs[j]] ? 0.0 : kInf;
    return dist;
}

Caliper Caliper::absolute(double v) {
    if (v < 0.0) throw ConfigError("caliper must be nonnegative");
    return {v, "absolute"};
}

Caliper derive_caliper(const DistanceMatrix& dist, const CaliperRule& rule) {
    Caliper caliper;
    switch (rule.kind) {
        case CaliperRuleKind::Absolute:
            if (rule.param < 0.0) throw ConfigError("caliper must be nonnegative");
            caliper.value = rule.param;
            caliper.rule = "absolute";
            return caliper;
        case CaliperRuleKind::Quantile: {
            const std::vector<double> finite = dist.finite_values();
            if (finite.empty()) throw NoFiniteDistances("all distances are infinite");
            caliper.value = quantile_type7(finite, rule.param);
            caliper.rule = "quantile";
            return caliper;
        }
        case CaliperRuleKind::SdMultiple: {
            const std::vector<double> finite = dist.finite_values();
            if (finite.empty()) throw NoFiniteDistances("all distances are infinite");
            double mean = 0.0;
            for (double v : finite) mean += v;
            mean /= static_cast<double>(finite.size());
            double ss = 0.0;
            for (double v : finite) ss += (v - mean) * (v - mean);
            const double sd =
                finite.size() > 1 ? std::sqrt(ss / static_cast<double>(finite.size() - 1)) : 0.0;
            caliper.value = rule.param * sd;
            caliper.rule = "sd_multiple";
            return caliper;
        }
    }
    throw ConfigError("unknown caliper rule");
}

}  // namespace textmatch
