#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "textmatch/represent.hpp"

namespace textmatch {

struct PropensityModel {
    Eigen::VectorXd coefficients;
    double intercept = 0.0;
    double lambda = 0.0;
    Eigen::VectorXd linear;  // eta = intercept + X beta
    Eigen::VectorXd scores;  // logistic(eta), clamped strictly inside (0, 1)
};

// Ridge-penalized logistic regression (intercept unpenalized), optimized by
// L-BFGS to gradient sup-norm 1e-8 on the mean log-likelihood scale. The
// penalty is (lambda/2)*||beta||^2 added to the negative log-likelihood.
PropensityModel fit_propensity(const Representation& rep, const std::vector<int>& z,
                               double lambda);

// The linear predictor as a one-column representation (the sufficient
// reduction score slot of the S2 presets).
Representation score_column(const PropensityModel& model, const std::string& preset_name,
                            const std::string& label = "sr_score");

}  // namespace textmatch
