#pragma once

// Two-step GMM: quadratic objective, BFGS minimization with identity and
// then optimal weighting, sandwich covariance and Wald inference.

#include "sgmm/bfgs.hpp"
#include "sgmm/data.hpp"
#include "sgmm/design.hpp"
#include "sgmm/linalg.hpp"
#include "sgmm/moments.hpp"

#include <Eigen/Core>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgmm {

class InvalidDataset : public std::invalid_argument {
public:
    InvalidDataset(std::vector<std::string> violations)
        : std::invalid_argument(join(violations)), violations_(std::move(violations)) {}
    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s = "invalid dataset:";
        for (const auto& m : v) s += " " + m + ";";
        return s;
    }
    std::vector<std::string> violations_;
};

inline constexpr double kNormalQuantile975 = 1.959963984540054;

/// Q(beta) = G(beta)' W G(beta).
inline double gmm_objective(const Eigen::VectorXd& beta, const MomentProblem& problem, const Eigen::MatrixXd& W) {
    if (W.rows() != problem.q() || W.cols() != problem.q())
        throw DimensionMismatch("weighting matrix must be " + std::to_string(problem.q()) + "x" +
                                std::to_string(problem.q()));
    const Eigen::VectorXd G = problem.moments(beta);
    return G.dot(W * G);
}

/// 2 Jac' W G.
inline Eigen::VectorXd objective_gradient(const Eigen::VectorXd& beta, const MomentProblem& problem,
                                          const Eigen::MatrixXd& W) {
    if (W.rows() != problem.q() || W.cols() != problem.q())
        throw DimensionMismatch("weighting matrix must be " + std::to_string(problem.q()) + "x" +
                                std::to_string(problem.q()));
    const Eigen::VectorXd G = problem.moments(beta);
    return 2.0 * problem.jacobian(beta).transpose() * (W * G);
}

inline OptimResult minimize_objective(const MomentProblem& problem, const Eigen::MatrixXd& W,
                                      const Eigen::VectorXd& start, const OptimizerOptions& opts) {
    return bfgs_minimize([&](const Eigen::VectorXd& b) { return gmm_objective(b, problem, W); },
                         [&](const Eigen::VectorXd& b) { return objective_gradient(b, problem, W); }, start, opts);
}

/// (1/n) (J'WJ)^-1 J'WSWJ (J'WJ)^-1.
inline Eigen::MatrixXd sandwich_covariance(const Eigen::MatrixXd& jac, const Eigen::MatrixXd& W,
                                           const Eigen::MatrixXd& S, int n) {
    const Eigen::MatrixXd WJ = W * jac;
    const Eigen::MatrixXd bread = symmetric_pinv(jac.transpose() * WJ);
    const Eigen::MatrixXd meat = WJ.transpose() * S * WJ;
    Eigen::MatrixXd V = bread * meat * bread / static_cast<double>(n);
    return (V + V.transpose()) * 0.5;
}

/// (1/n) (J' S^-1 J)^-1, the efficient form when W inverts S exactly.
inline Eigen::MatrixXd efficient_covariance(const Eigen::MatrixXd& jac, const Eigen::MatrixXd& S_inverse, int n) {
    Eigen::MatrixXd V = symmetric_pinv(jac.transpose() * S_inverse * jac) / static_cast<double>(n);
    return (V + V.transpose()) * 0.5;
}

struct WaldInference {
    Eigen::VectorXd standard_errors;
    Eigen::VectorXd z_stats;
    Eigen::VectorXd p_values;  // NaN where the standard error is zero
    Eigen::VectorXd ci_lower;
    Eigen::VectorXd ci_upper;
};

/// Two-sided normal-reference tests and 95% intervals.
inline WaldInference wald_inference(const Eigen::VectorXd& beta_hat, const Eigen::MatrixXd& covariance) {
    const Eigen::Index p = beta_hat.size();
    if (covariance.rows() != p || covariance.cols() != p)
        throw DimensionMismatch("covariance does not match parameter vector");
    WaldInference w;
    w.standard_errors.resize(p);
    w.z_stats.resize(p);
    w.p_values.resize(p);
    w.ci_lower.resize(p);
    w.ci_upper.resize(p);
    for (Eigen::Index r = 0; r < p; ++r) {
        const double se = std::sqrt(std::max(covariance(r, r), 0.0));
        w.standard_errors(r) = se;
        if (se > 0) {
            const double z = beta_hat(r) / se;
            w.z_stats(r) = z;
            w.p_values(r) = std::erfc(std::abs(z) / std::sqrt(2.0));
        } else {
            w.z_stats(r) = std::numeric_limits<double>::quiet_NaN();
            w.p_values(r) = std::numeric_limits<double>::quiet_NaN();
        }
        w.ci_lower(r) = beta_hat(r) - kNormalQuantile975 * se;
        w.ci_upper(r) = beta_hat(r) + kNormalQuantile975 * se;
    }
    return w;
}

struct FitOptions {
    OptimizerOptions optimizer;
    /// Overrides the default starting point (least squares or zeros).
    std::optional<Eigen::VectorXd> start;
};

struct GmmFit {
    std::vector<std::string> param_names;
    Link link = Link::Identity;
    Eigen::VectorXd beta_hat;
    Eigen::VectorXd beta_step1;
    Eigen::MatrixXd covariance;
    Eigen::VectorXd standard_errors;
    Eigen::VectorXd z_stats;
    Eigen::VectorXd p_values;
    Eigen::VectorXd ci_lower;
    Eigen::VectorXd ci_upper;
    double objective_step1 = 0;
    double objective_step2 = 0;
    double j_statistic = 0;  // n * Q(beta_hat)
    int n_subjects = 0;
    int n_times = 0;
    int n_moments = 0;
    int n_params = 0;
    bool converged = false;
    OptimStatus status_step1 = OptimStatus::NotConverged;
    OptimStatus status_step2 = OptimStatus::NotConverged;
    int iterations_step1 = 0;
    int iterations_step2 = 0;
    int weighting_rank = 0;
    bool weighting_ridge = false;
    double weighting_condition = 0;
};

/// Pooled least squares of the outcome on the grouped-lag regressors.
inline Eigen::VectorXd least_squares_start(const MomentProblem& problem) {
    const int n = problem.n(), T = problem.T(), p = problem.p();
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n) * T, p);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n) * T);
    for (int t = 1; t <= T; ++t) {
        X.middleRows(static_cast<Eigen::Index>(t - 1) * n, n) = problem.regressors_at(t);
        y.segment(static_cast<Eigen::Index>(t - 1) * n, n) = problem.outcomes().col(t - 1);
    }
    Eigen::VectorXd b = X.colPivHouseholderQr().solve(y);
    if (!b.allFinite()) b.setZero();
    return b;
}

/// Two-step GMM on a prepared problem: W = I, then W = S(beta_1)^+.
inline GmmFit two_step_fit(const MomentProblem& problem, const FitOptions& opts = {}) {
    const int n = problem.n(), p = problem.p(), q = problem.q();
    if (q < p)
        throw Underidentified("underidentified: " + std::to_string(q) + " moment conditions for " +
                              std::to_string(p) + " parameters");
    if (n <= p)
        throw Underidentified("underidentified: " + std::to_string(n) + " subjects for " + std::to_string(p) +
                              " parameters");

    GmmFit fit;
    fit.param_names = problem.spec().param_names();
    fit.link = problem.spec().link;
    fit.n_subjects = n;
    fit.n_times = problem.T();
    fit.n_moments = q;
    fit.n_params = p;

    Eigen::VectorXd start;
    if (opts.start) {
        if (opts.start->size() != p) throw DimensionMismatch("starting vector has wrong length");
        start = *opts.start;
    } else {
        start = problem.spec().link == Link::Identity ? least_squares_start(problem) : Eigen::VectorXd::Zero(p);
    }

    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(q, q);
    const OptimResult step1 = minimize_objective(problem, I, start, opts.optimizer);
    fit.beta_step1 = step1.x;
    fit.objective_step1 = step1.value;
    fit.status_step1 = step1.status;
    fit.iterations_step1 = step1.iterations;

    const Eigen::MatrixXd S1 = long_run_covariance(problem.contributions(step1.x));
    const WeightingInverse w = regularized_inverse(S1, p);
    fit.weighting_rank = w.rank;
    fit.weighting_ridge = w.ridge;
    fit.weighting_condition = w.condition;

    const OptimResult step2 = minimize_objective(problem, w.W, step1.x, opts.optimizer);
    fit.beta_hat = step2.x;
    fit.objective_step2 = step2.value;
    fit.status_step2 = step2.status;
    fit.iterations_step2 = step2.iterations;
    fit.j_statistic = n * step2.value;
    fit.converged = step1.converged() && step2.converged();

    const Eigen::MatrixXd S2 = long_run_covariance(problem.contributions(step2.x));
    fit.covariance = sandwich_covariance(problem.jacobian(step2.x), w.W, S2, n);
    WaldInference wald = wald_inference(fit.beta_hat, fit.covariance);
    fit.standard_errors = std::move(wald.standard_errors);
    fit.z_stats = std::move(wald.z_stats);
    fit.p_values = std::move(wald.p_values);
    fit.ci_lower = std::move(wald.ci_lower);
    fit.ci_upper = std::move(wald.ci_upper);
    return fit;
}

inline GmmFit two_step_fit(const LongitudinalDataset& ds, const ModelSpec& spec, const FitOptions& opts = {}) {
    const OutcomeKind kind = spec.link == Link::Logit ? OutcomeKind::Binary : OutcomeKind::Continuous;
    auto violations = validate(ds, kind);
    if (!violations.empty()) throw InvalidDataset(std::move(violations));
    MomentSystem system = build_moment_system(ds.n_subjects(), ds.n_times(), spec);
    return two_step_fit(MomentProblem(ds, spec, std::move(system)), opts);
}

}  // namespace sgmm
