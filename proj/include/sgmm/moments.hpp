#pragma once

// Mean model, empirical moment vector, its Jacobian, and the subject-clustered
// covariance of the moment contributions.

#include "sgmm/data.hpp"
#include "sgmm/design.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgmm {

class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class TooFewSubjects : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr double kEtaClamp = 700.0;
inline constexpr double kMuFloor = 1e-12;

inline double linear_predictor(const Eigen::Ref<const Eigen::VectorXd>& row,
                               const Eigen::Ref<const Eigen::VectorXd>& beta) {
    if (row.size() != beta.size())
        throw DimensionMismatch("regressor length " + std::to_string(row.size()) + " != parameter length " +
                                std::to_string(beta.size()));
    return row.dot(beta);
}

/// Logistic function evaluated without overflow; eta is clamped to +-700.
inline double logistic(double eta) {
    eta = std::clamp(eta, -kEtaClamp, kEtaClamp);
    if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

inline double mean_response(double eta, Link link) { return link == Link::Identity ? eta : logistic(eta); }

/// mu(1-mu) with mu kept inside [1e-12, 1-1e-12].
inline double logistic_variance(double mu) {
    mu = std::clamp(mu, kMuFloor, 1.0 - kMuFloor);
    return mu * (1.0 - mu);
}

/// Precomputed evaluation context for one (dataset, model, moment system).
/// Holds the grouped-lag regressors and the covariate part of every
/// moment term so that repeated evaluations only touch the link.
class MomentProblem {
public:
    MomentProblem(const LongitudinalDataset& ds, const ModelSpec& spec, MomentSystem system)
        : spec_(spec), system_(std::move(system)), n_(ds.n_subjects()), T_(ds.n_times()), p_(spec.n_params()) {
        if (system_.n_params != p_ || system_.n_times != T_)
            throw DimensionMismatch("moment system does not match model and dataset shape");
        const DesignTensor design = expand_design(ds, spec);
        y_ = ds.outcomes;
        z_by_time_.resize(T_);
        for (int t = 1; t <= T_; ++t) {
            z_by_time_[t - 1].resize(n_, p_);
            for (int i = 0; i < n_; ++i) z_by_time_[t - 1].row(i) = design.row(i, t);
        }

        std::vector<int> cov_idx;
        for (const auto& c : spec.covariates) cov_idx.push_back(ds.covariate_index(c.name));

        term_offset_.push_back(0);
        for (const auto& m : system_.conditions) {
            for (auto [s, t] : m.terms) {
                if (s < 1 || s > T_ || t < 1 || t > T_) throw DimensionMismatch("moment term time out of range");
                term_s_.push_back(s - 1);
                term_t_.push_back(t - 1);
            }
            term_offset_.push_back(static_cast<int>(term_s_.size()));
        }
        coef_.resize(n_, static_cast<Eigen::Index>(term_s_.size()));
        int k = 0;
        for (const auto& m : system_.conditions) {
            for (auto [s, t] : m.terms) {
                if (m.covariate < 0) {
                    coef_.col(k).setOnes();
                } else {
                    const auto& block = spec.covariates[m.covariate].effective_blocks()[m.block];
                    const auto& x = ds.covariates[cov_idx[m.covariate]];
                    for (int i = 0; i < n_; ++i) coef_(i, k) = block_sum(x.row(i), block, s);
                }
                ++k;
            }
        }
    }

    int n() const { return n_; }
    int T() const { return T_; }
    int p() const { return p_; }
    int q() const { return system_.q(); }
    const ModelSpec& spec() const { return spec_; }
    const MomentSystem& system() const { return system_; }
    const Eigen::MatrixXd& outcomes() const { return y_; }
    /// n x p regressors at 1-based time t.
    const Eigen::MatrixXd& regressors_at(int t) const { return z_by_time_[t - 1]; }

    /// Per-subject contributions g_i as rows of an n x q matrix.
    Eigen::MatrixXd contributions(const Eigen::VectorXd& beta) const {
        const State st = state(beta);
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n_, q());
        for (int m = 0; m < q(); ++m)
            for (int k = term_offset_[m]; k < term_offset_[m + 1]; ++k)
                g.col(m).array() += coef_.col(k).array() * st.w.col(term_s_[k]).array() *
                                    st.resid.col(term_t_[k]).array();
        return g;
    }

    /// G(beta): subject average of the contributions, summed in subject order.
    Eigen::VectorXd moments(const Eigen::VectorXd& beta) const { return mean_of(contributions(beta)); }

    /// q x p derivative of G with respect to beta.
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& beta) const {
        const State st = state(beta);
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(q(), p_);
        Eigen::VectorXd a(n_), b(n_);
        const bool logit = spec_.link == Link::Logit;
        for (int m = 0; m < q(); ++m) {
            for (int k = term_offset_[m]; k < term_offset_[m + 1]; ++k) {
                const int s = term_s_[k];
                const int t = term_t_[k];
                b = (coef_.col(k).array() * st.w.col(s).array() * st.dmu.col(t).array()).matrix();
                jac.row(m).noalias() -= b.transpose() * z_by_time_[t];
                if (logit) {
                    a = (coef_.col(k).array() * st.dw.col(s).array() * st.resid.col(t).array()).matrix();
                    jac.row(m).noalias() += a.transpose() * z_by_time_[s];
                }
            }
        }
        return jac / static_cast<double>(n_);
    }

    /// Linear predictor for every (subject, time), n x T.
    Eigen::MatrixXd linear_predictors(const Eigen::VectorXd& beta) const {
        check_beta(beta);
        Eigen::MatrixXd eta(n_, T_);
        for (int t = 0; t < T_; ++t) eta.col(t) = z_by_time_[t] * beta;
        return eta;
    }

    static Eigen::VectorXd mean_of(const Eigen::MatrixXd& g) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) acc += g.row(i).transpose();
        return acc / static_cast<double>(g.rows());
    }

private:
    struct State {
        Eigen::MatrixXd resid;  // Y - mu
        Eigen::MatrixXd w;      // derivative factor at s: 1 or mu(1-mu)
        Eigen::MatrixXd dw;     // d w / d eta
        Eigen::MatrixXd dmu;    // d mu / d eta
    };

    void check_beta(const Eigen::VectorXd& beta) const {
        if (beta.size() != p_)
            throw DimensionMismatch("beta has length " + std::to_string(beta.size()) + ", model has " +
                                    std::to_string(p_) + " parameters");
    }

    State state(const Eigen::VectorXd& beta) const {
        const Eigen::MatrixXd eta = linear_predictors(beta);
        State st;
        if (spec_.link == Link::Identity) {
            st.resid = y_ - eta;
            st.w = Eigen::MatrixXd::Ones(n_, T_);
            st.dmu = Eigen::MatrixXd::Ones(n_, T_);
            return st;
        }
        st.resid.resize(n_, T_);
        st.w.resize(n_, T_);
        st.dw.resize(n_, T_);
        st.dmu.resize(n_, T_);
        for (int t = 0; t < T_; ++t)
            for (int i = 0; i < n_; ++i) {
                const double mu = logistic(eta(i, t));
                const double mc = std::clamp(mu, kMuFloor, 1.0 - kMuFloor);
                st.resid(i, t) = y_(i, t) - mu;
                st.dmu(i, t) = mu * (1.0 - mu);
                st.w(i, t) = mc * (1.0 - mc);
                st.dw(i, t) = st.w(i, t) * (1.0 - 2.0 * mc);
            }
        return st;
    }

    ModelSpec spec_;
    MomentSystem system_;
    int n_;
    int T_;
    int p_;
    Eigen::MatrixXd y_;
    std::vector<Eigen::MatrixXd> z_by_time_;
    std::vector<int> term_offset_;
    std::vector<int> term_s_;
    std::vector<int> term_t_;
    Eigen::MatrixXd coef_;  // n x (number of terms): covariate part of each term
};

struct MomentEvaluation {
    Eigen::VectorXd G;             // length q
    Eigen::MatrixXd contributions; // n x q, row i is g_i
};

inline MomentEvaluation moment_vector(const Eigen::VectorXd& beta, const LongitudinalDataset& ds,
                                      const MomentSystem& system, const ModelSpec& spec) {
    MomentProblem problem(ds, spec, system);
    MomentEvaluation ev;
    ev.contributions = problem.contributions(beta);
    ev.G = MomentProblem::mean_of(ev.contributions);
    return ev;
}

inline Eigen::MatrixXd moment_jacobian(const Eigen::VectorXd& beta, const LongitudinalDataset& ds,
                                       const MomentSystem& system, const ModelSpec& spec) {
    return MomentProblem(ds, spec, system).jacobian(beta);
}

/// S = (1/n) sum_i (g_i - gbar)(g_i - gbar)^T, clustering on subjects.
inline Eigen::MatrixXd long_run_covariance(const Eigen::MatrixXd& contributions) {
    const Eigen::Index n = contributions.rows();
    if (n < 2) throw TooFewSubjects("long-run covariance needs at least 2 subjects");
    const Eigen::RowVectorXd mean = MomentProblem::mean_of(contributions).transpose();
    const Eigen::MatrixXd centered = contributions.rowwise() - mean;
    Eigen::MatrixXd S = (centered.transpose() * centered) / static_cast<double>(n);
    return (S + S.transpose()) * 0.5;
}

}  // namespace sgmm
