#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace textmatch {

// Coordinate-descent solution of
//   min (1/2n) ||y - b0 - X b||^2 + lambda ||b||_1
// over internally standardized columns (constant columns get coefficient 0).
struct LassoFit {
    Eigen::VectorXd coefficients;  // original scale
    double intercept = 0.0;
    double lambda = 0.0;
};

LassoFit lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda);

// Smallest lambda that zeroes every slope.
double lasso_lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

// 100 log-spaced values from lambda_max down to 1e-4 * lambda_max.
std::vector<double> lasso_lambda_grid(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      int n_lambda = 100, double min_ratio = 1e-4);

struct LassoCvResult {
    LassoFit fit;                   // refit on all data at the selected lambda
    std::vector<double> lambdas;    // grid, descending
    std::vector<double> cv_mse;     // mean held-out squared error per lambda
    int selected = 0;               // index into lambdas
};

LassoCvResult lasso_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int folds,
                       std::uint64_t seed, const std::vector<double>& lambdas = {});

// Match-quality model: quadratic feature expansion, 10-fold CV LASSO,
// predictions clipped to the [0, 10] rating scale.
struct QualityModel {
    std::vector<std::string> feature_labels;  // base labels then squared terms
    Eigen::VectorXd coefficients;             // original feature scale
    double intercept = 0.0;
    double lambda = 0.0;
    int folds = 0;
    std::uint64_t seed = 0;

    double predict(const Eigen::VectorXd& base_features) const;
    Eigen::VectorXd predict_all(const Eigen::MatrixXd& base_features) const;
};

QualityModel fit_quality_model(const Eigen::MatrixXd& features,
                               const std::vector<std::string>& labels,
                               const Eigen::VectorXd& ratings, int folds, std::uint64_t seed);

}  // namespace textmatch
