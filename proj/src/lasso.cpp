#include "textmatch/lasso.hpp"

#include <algorithm>
#include <cmath>

#include "textmatch/errors.hpp"
#include "textmatch/rng.hpp"

namespace textmatch {

namespace {

struct Standardized {
    Eigen::MatrixXd x;          // centered, unit sample-SD columns (population sd, 1/n)
    Eigen::VectorXd y;          // centered
    Eigen::VectorXd col_mean, col_sd;
    double y_mean = 0.0;
};

Standardized standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    Standardized s;
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    s.col_mean = x.colwise().mean();
    s.x = x.rowwise() - s.col_mean.transpose();
    s.col_sd.resize(p);
    for (int j = 0; j < p; ++j) {
        const double sd = std::sqrt(s.x.col(j).squaredNorm() / n);
        s.col_sd[j] = sd;
        if (sd > 0.0)
            s.x.col(j) /= sd;
        else
            s.x.col(j).setZero();  // constant column: coefficient stays 0
    }
    s.y_mean = y.mean();
    s.y = y.array() - s.y_mean;
    return s;
}

// cyclic coordinate descent with warm start; columns have unit (1/n) norm
void descend(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
             Eigen::VectorXd& beta, Eigen::VectorXd& residual) {
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    const double tol = 1e-10;
    for (int pass = 0; pass < 10000; ++pass) {
        double max_delta = 0.0;
        for (int j = 0; j < p; ++j) {
            const double old = beta[j];
            // column j has (1/n)x_j.x_j = 1 (or 0 for constant columns)
            const double xx = x.col(j).squaredNorm() / n;
            if (xx == 0.0) continue;
            const double rho = x.col(j).dot(residual) / n + xx * old;
            double next = 0.0;
            if (rho > lambda)
                next = (rho - lambda) / xx;
            else if (rho < -lambda)
                next = (rho + lambda) / xx;
            if (next != old) {
                residual -= (next - old) * x.col(j);
                beta[j] = next;
                max_delta = std::max(max_delta, std::abs(next - old));
            }
        }
        if (max_delta < tol) break;
    }
}

}  // namespace

double lasso_lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const Standardized s = standardize(x, y);
    const int n = static_cast<int>(x.rows());
    return (s.x.transpose() * s.y).lpNorm<Eigen::Infinity>() / n;
}

std::vector<double> lasso_lambda_grid(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      int n_lambda, double min_ratio) {
    double lmax = lasso_lambda_max(x, y);
    if (lmax <= 0.0) lmax = 1.0;  // constant outcome: any grid gives the intercept model
    std::vector<double> grid(n_lambda);
    const double lmin = lmax * min_ratio;
    for (int i = 0; i < n_lambda; ++i) {
        const double t = n_lambda == 1 ? 0.0 : static_cast<double>(i) / (n_lambda - 1);
        grid[i] = std::exp(std::log(lmax) + t * (std::log(lmin) - std::log(lmax)));
    }
    return grid;
}

LassoFit lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
    if (x.rows() != y.size()) throw ShapeError("feature/outcome row mismatch");
    if (lambda < 0.0) throw ConfigError("lasso lambda must be nonnegative");
    const Standardized s = standardize(x, y);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
    Eigen::VectorXd residual = s.y;
    descend(s.x, s.y, lambda, beta, residual);

    LassoFit fit;
    fit.lambda = lambda;
    fit.coefficients.resize(x.cols());
    double mean_shift = 0.0;
    for (int j = 0; j < x.cols(); ++j) {
        fit.coefficients[j] = s.col_sd[j] > 0.0 ? beta[j] / s.col_sd[j] : 0.0;
        mean_shift += fit.coefficients[j] * s.col_mean[j];
    }
    fit.intercept = s.y_mean - mean_shift;
    return fit;
}

LassoCvResult lasso_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int folds,
                       std::uint64_t seed, const std::vector<double>& lambdas) {
    const int n = static_cast<int>(x.rows());
    if (folds < 2) throw ConfigError("cross validation needs at least 2 folds");
    if (n < folds) throw ConfigError("fewer rows than folds");

    LassoCvResult result;
    result.lambdas = lambdas.empty() ? lasso_lambda_grid(x, y) : lambdas;

    // seeded shuffle, then round-robin fold assignment
    Rng rng(seed);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    std::vector<int> fold_of(n);
    for (int i = 0; i < n; ++i) fold_of[order[i]] = i % folds;

    const int n_lambda = static_cast<int>(result.lambdas.size());
    result.cv_mse.assign(n_lambda, 0.0);
    std::vector<int> counts(n_lambda, 0);

    for (int f = 0; f < folds; ++f) {
        std::vector<int> train, test;
        for (int i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
        Eigen::MatrixXd xtr(train.size(), x.cols());
        Eigen::VectorXd ytr(train.size());
        for (std::size_t i = 0; i < train.size(); ++i) {
            xtr.row(i) = x.row(train[i]);
            ytr[i] = y[train[i]];
        }
        // warm-start down the path
        const Standardized s = standardize(xtr, ytr);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
        Eigen::VectorXd residual = s.y;
        for (int l = 0; l < n_lambda; ++l) {
            descend(s.x, s.y, result.lambdas[l], beta, residual);
            // fold-model predictions on held-out rows, on the original scale
            for (int i : test) {
                double pred = s.y_mean;
                for (int j = 0; j < x.cols(); ++j)
                    if (s.col_sd[j] > 0.0)
                        pred += beta[j] / s.col_sd[j] * (x(i, j) - s.col_mean[j]);
                const double err = y[i] - pred;
                result.cv_mse[l] += err * err;
            }
            counts[l] += static_cast<int>(test.size());
        }
    }
    for (int l = 0; l < n_lambda; ++l) result.cv_mse[l] /= counts[l];

    result.selected = 0;
    for (int l = 1; l < n_lambda; ++l)
        if (result.cv_mse[l] < result.cv_mse[result.selected]) result.selected = l;
    result.fit = lasso_fit(x, y, result.lambdas[result.selected]);
    return result;
}

double QualityModel::predict(const Eigen::VectorXd& base_features) const {
    const int p = static_cast<int>(base_features.size());
    double value = intercept;
    for (int j = 0; j < p; ++j) {
        value += coefficients[j] * base_features[j];
        value += coefficients[p + j] * base_features[j] * base_features[j];
    }
    return std::clamp(value, 0.0, 10.0);
}

Eigen::VectorXd QualityModel::predict_all(const Eigen::MatrixXd& base_features) const {
    Eigen::VectorXd out(base_features.rows());
    for (int i = 0; i < base_features.rows(); ++i) out[i] = predict(base_features.row(i));
    return out;
}

QualityModel fit_quality_model(const Eigen::MatrixXd& features,
                               const std::vector<std::string>& labels,
                               const Eigen::VectorXd& ratings, int folds, std::uint64_t seed) {
    const int n = static_cast<int>(features.rows());
    const int p = static_cast<int>(features.cols());
    if (n < folds) throw ConfigError("need at least as many evaluated pairs as folds");
    if (!labels.empty() && static_cast<int>(labels.size()) != p)
        throw ShapeError("feature label count mismatch");

    // quadratic expansion doubles the column count
    Eigen::MatrixXd expanded(n, 2 * p);
    expanded.leftCols(p) = features;
    expanded.rightCols(p) = features.array().square();

    QualityModel model;
    model.folds = folds;
    model.seed = seed;
    for (int j = 0; j < p; ++j)
        model.feature_labels.push_back(labels.empty() ? "f" + std::to_string(j) : labels[j]);
    for (int j = 0; j < p; ++j) model.feature_labels.push_back(model.feature_labels[j] + "^2");

    const double spread = ratings.maxCoeff() - ratings.minCoeff();
    if (spread == 0.0) {  // constant outcome: intercept-only model
        model.coefficients = Eigen::VectorXd::Zero(2 * p);
        model.intercept = ratings.mean();
        model.lambda = 0.0;
        return model;
    }

    const LassoCvResult cv = lasso_cv(expanded, ratings, folds, seed);
    model.coefficients = cv.fit.coefficients;
    model.intercept = cv.fit.intercept;
    model.lambda = cv.fit.lambda;
    return model;
}

}  // namespace textmatch
