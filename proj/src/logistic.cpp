#include "textmatch/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "textmatch/errors.hpp"

namespace textmatch {

namespace {

double log1pexp(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

// theta = (intercept, beta); objective and gradient on the 1/N scale.
struct Objective {
    const Representation& rep;
    const std::vector<int>& z;
    double lambda;
    int n, p;

    double eval(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
        const double b0 = theta[0];
        double f = 0.0;
        grad.setZero();
        Eigen::VectorXd eta(n);
        if (rep.is_sparse) {
            for (int i = 0; i < n; ++i) {
                double e = b0;
                for (const auto& [t, v] : rep.sparse_rows[i]) e += v * theta[t + 1];
                eta[i] = e;
            }
        } else {
            eta = rep.dense * theta.tail(p);
            eta.array() += b0;
        }
        for (int i = 0; i < n; ++i) {
            f += log1pexp(eta[i]) - z[i] * eta[i];
            const double prob = 1.0 / (1.0 + std::exp(-eta[i]));
            const double r = prob - z[i];
            grad[0] += r;
            if (rep.is_sparse) {
                for (const auto& [t, v] : rep.sparse_rows[i]) grad[t + 1] += r * v;
            }
        }
        if (!rep.is_sparse) {
            Eigen::VectorXd resid(n);
            for (int i = 0; i < n; ++i) resid[i] = 1.0 / (1.0 + std::exp(-eta[i])) - z[i];
            grad.tail(p) = rep.dense.transpose() * resid;
        }
        const double inv_n = 1.0 / n;
        f *= inv_n;
        grad *= inv_n;
        if (lambda > 0.0) {
            f += 0.5 * lambda * inv_n * theta.tail(p).squaredNorm();
            grad.tail(p) += (lambda * inv_n) * theta.tail(p);
        }
        return f;
    }
};

// Two-loop L-BFGS with backtracking Armijo line search.
Eigen::VectorXd lbfgs_minimize(const Objective& obj, int dim, double grad_tol, int max_iter,
                               bool* converged) {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd grad(dim), new_grad(dim);
    double f = obj.eval(theta, grad);
    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;
    const int memory = 10;
    *converged = false;

    for (int iter = 0; iter < max_iter; ++iter) {
        if (grad.lpNorm<Eigen::Infinity>() <= grad_tol) {
            *converged = true;
            break;
        }
        // two-loop recursion
        Eigen::VectorXd q = grad;
        std::vector<double> alpha(s_hist.size());
        for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
            alpha[k] = rho_hist[k] * s_hist[k].dot(q);
            q -= alpha[k] * y_hist[k];
        }
        if (!s_hist.empty()) {
            const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        }
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double b = rho_hist[k] * y_hist[k].dot(q);
            q += (alpha[k] - b) * s_hist[k];
        }
        Eigen::VectorXd direction = -q;
        double dir_grad = direction.dot(grad);
        if (dir_grad >= 0.0) {  // not a descent direction: fall back to steepest descent
            direction = -grad;
            dir_grad = -grad.squaredNorm();
        }

        double step = iter == 0 ? 1.0 / std::max(1.0, grad.norm()) : 1.0;
        double new_f = 0.0;
        Eigen::VectorXd new_theta;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            new_theta = theta + step * direction;
            new_f = obj.eval(new_theta, new_grad);
            if (new_f <= f + 1e-4 * step * dir_grad) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // line search failed: gradient is numerically flat

        Eigen::VectorXd s = new_theta - theta;
        Eigen::VectorXd y = new_grad - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        theta = std::move(new_theta);
        grad = new_grad;
        f = new_f;
    }
    if (grad.lpNorm<Eigen::Infinity>() <= grad_tol) *converged = true;
    return theta;
}

// Damped Newton; exact Hessian handles the extreme curvature anisotropy that
// large ridge strengths create. Used when p is small enough to factorize.
Eigen::VectorXd newton_minimize(const Objective& obj, int dim, double grad_tol, int max_iter) {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd grad(dim), trial_grad(dim);
    double f = obj.eval(theta, grad);
    const int n = obj.n;
    const int p = obj.p;
    const Eigen::MatrixXd x = obj.rep.is_sparse ? obj.rep.to_dense() : obj.rep.dense;

    for (int iter = 0; iter < max_iter; ++iter) {
        if (grad.lpNorm<Eigen::Infinity>() <= grad_tol) break;
        if (theta.lpNorm<Eigen::Infinity>() > 1e4) break;  // diverging (separation)

        Eigen::VectorXd eta = x * theta.tail(p);
        eta.array() += theta[0];
        Eigen::VectorXd w(n);
        for (int i = 0; i < n; ++i) {
            const double prob = 1.0 / (1.0 + std::exp(-eta[i]));
            w[i] = std::max(prob * (1.0 - prob), 1e-12);
        }
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
        h(0, 0) = w.sum();
        h.block(0, 1, 1, p) = (w.transpose() * x);
        h.block(1, 0, p, 1) = h.block(0, 1, 1, p).transpose();
        h.block(1, 1, p, p) = x.transpose() * w.asDiagonal() * x;
        h /= static_cast<double>(n);
        for (int j = 1; j <= p; ++j) h(j, j) += obj.lambda / n;
        h.diagonal().array() += 1e-12;

        const Eigen::VectorXd step = h.ldlt().solve(-grad);
        double scale = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls) {
            const Eigen::VectorXd trial = theta + scale * step;
            const double trial_f = obj.eval(trial, trial_grad);
            if (trial_f <= f + 1e-4 * scale * step.dot(grad)) {
                theta = trial;
                f = trial_f;
                grad = trial_grad;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if (!accepted) break;
    }
    return theta;
}

}  // namespace

PropensityModel fit_propensity(const Representation& rep, const std::vector<int>& z,
                               double lambda) {
    const int n = rep.rows();
    const int p = rep.cols();
    if (static_cast<int>(z.size()) != n) throw ShapeError("group vector length mismatch");
    for (int v : z)
        if (v != 0 && v != 1) throw ConfigError("propensity fit requires binary groups");
    if (lambda < 0.0) throw ConfigError("ridge strength must be nonnegative");
    if (lambda == 0.0 && p >= n)
        throw ConfigError("ridge strength must be positive when p >= N");

    const Objective obj{rep, z, lambda, n, p};
    Eigen::VectorXd theta;
    if (p <= 300) {
        theta = newton_minimize(obj, p + 1, 1e-8, 500);
    } else {
        bool converged = false;
        theta = lbfgs_minimize(obj, p + 1, 1e-8, 2000, &converged);
    }

    if (lambda == 0.0) {
        // perfect separation: the likelihood is unbounded, every fitted
        // probability pins its label and the coefficients blow up
        Eigen::VectorXd eta(n);
        if (rep.is_sparse) {
            for (int i = 0; i < n; ++i) {
                double e = theta[0];
                for (const auto& [t, v] : rep.sparse_rows[i]) e += v * theta[t + 1];
                eta[i] = e;
            }
        } else {
            eta = rep.dense * theta.tail(p);
            eta.array() += theta[0];
        }
        double worst_resid = 0.0;
        for (int i = 0; i < n; ++i) {
            const double prob = 1.0 / (1.0 + std::exp(-eta[i]));
            worst_resid = std::max(worst_resid, std::abs(prob - z[i]));
        }
        if (worst_resid < 1e-3 && theta.tail(p).lpNorm<Eigen::Infinity>() > 10.0)
            throw SeparationError(
                "perfect separation: the unpenalized likelihood is unbounded; refit with "
                "lambda > 0");
    }

    PropensityModel model;
    model.intercept = theta[0];
    model.coefficients = theta.tail(p);
    model.lambda = lambda;
    model.linear.resize(n);
    if (rep.is_sparse) {
        for (int i = 0; i < n; ++i) {
            double e = model.intercept;
            for (const auto& [t, v] : rep.sparse_rows[i]) e += v * model.coefficients[t];
            model.linear[i] = e;
        }
    } else {
        model.linear = rep.dense * model.coefficients;
        model.linear.array() += model.intercept;
    }
    model.scores.resize(n);
    for (int i = 0; i < n; ++i) {
        const double eta = std::clamp(model.linear[i], -30.0, 30.0);
        model.scores[i] = 1.0 / (1.0 + std::exp(-eta));
    }
    return model;
}

Representation score_column(const PropensityModel& model, const std::string& preset_name,
                            const std::string& label) {
    Eigen::MatrixXd m(model.linear.size(), 1);
    m.col(0) = model.linear;
    return dense_representation(std::move(m), RepKind::SCORE, preset_name, {label});
}

}  // namespace textmatch
