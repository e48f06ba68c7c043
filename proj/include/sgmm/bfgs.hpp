#pragma once

// BFGS quasi-Newton minimization with a strong-Wolfe line search.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sgmm {

struct OptimizerOptions {
    double gradient_tolerance = 1e-8;  // on the infinity norm of the gradient
    int max_iterations = 500;
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_line_search_steps = 40;

    void check() const {
        if (!(gradient_tolerance > 0)) throw std::invalid_argument("gradient tolerance must be positive");
        if (max_iterations < 0) throw std::invalid_argument("max iterations must be non-negative");
        if (!(0 < c1 && c1 < c2 && c2 < 1)) throw std::invalid_argument("Wolfe constants need 0 < c1 < c2 < 1");
        if (max_line_search_steps < 1) throw std::invalid_argument("need at least one line-search step");
    }
};

enum class OptimStatus { Converged, NotConverged, LineSearchFailed };

inline std::string to_string(OptimStatus s) {
    switch (s) {
        case OptimStatus::Converged: return "converged";
        case OptimStatus::NotConverged: return "not_converged";
        case OptimStatus::LineSearchFailed: return "line_search_failed";
    }
    return "?";
}

struct OptimResult {
    Eigen::VectorXd x;  // best iterate
    double value = std::numeric_limits<double>::quiet_NaN();
    Eigen::VectorXd gradient;
    int iterations = 0;
    int evaluations = 0;
    int skipped_updates = 0;
    OptimStatus status = OptimStatus::NotConverged;

    bool converged() const { return status == OptimStatus::Converged; }
};

namespace detail {

// Minimizer of the cubic matching (a, fa, da) and (b, fb, db); falls back to
// bisection when the interpolant has no usable minimizer in the bracket.
inline double cubic_step(double a, double fa, double da, double b, double fb, double db) {
    const double lo = std::min(a, b), hi = std::max(a, b);
    const double guard = 1e-4 * (hi - lo);
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    double x = 0.5 * (a + b);
    if (disc >= 0 && std::isfinite(disc)) {
        const double d2 = std::copysign(std::sqrt(disc), b - a);
        const double denom = db - da + 2.0 * d2;
        if (denom != 0) {
            const double c = b - (b - a) * ((db + d2 - d1) / denom);
            if (std::isfinite(c)) x = c;
        }
    }
    if (!(x > lo + guard && x < hi - guard)) {
        // quadratic from values and the derivative at a
        const double dq = (fb - fa - da * (b - a));
        const double xq = dq > 0 ? a - da * (b - a) * (b - a) / (2.0 * dq) : 0.5 * (a + b);
        x = (xq > lo + guard && xq < hi - guard) ? xq : 0.5 * (a + b);
    }
    return x;
}

}  // namespace detail

/// Minimizes `objective` given its `gradient`, both callables on
/// Eigen::VectorXd. The inverse-Hessian approximation is updated only when
/// s'y > 1e-10 |s||y|. On failure the result carries the best iterate.
template <typename Objective, typename Gradient>
OptimResult bfgs_minimize(Objective&& objective, Gradient&& gradient, const Eigen::VectorXd& x0,
                          const OptimizerOptions& opts = {}) {
    opts.check();
    const Eigen::Index p = x0.size();
    OptimResult res;
    res.x = x0;
    res.value = objective(res.x);
    res.gradient = gradient(res.x);
    res.evaluations = 1;
    if (!std::isfinite(res.value) || !res.gradient.allFinite()) {
        res.status = OptimStatus::LineSearchFailed;
        return res;
    }

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(p, p);
    bool scaled = false;
    bool reset_tried = false;

    for (;;) {
        if (res.gradient.lpNorm<Eigen::Infinity>() <= opts.gradient_tolerance) {
            res.status = OptimStatus::Converged;
            return res;
        }
        if (res.iterations >= opts.max_iterations) {
            res.status = OptimStatus::NotConverged;
            return res;
        }

        Eigen::VectorXd dir = -H * res.gradient;
        double slope = res.gradient.dot(dir);
        if (!(slope < 0)) {
            H.setIdentity();
            scaled = false;
            dir = -res.gradient;
            slope = res.gradient.dot(dir);
        }

        // strong Wolfe line search on phi(a) = f(x + a dir)
        const double f0 = res.value;
        const double d0 = slope;
        double alpha = scaled ? 1.0 : std::min(1.0, 1.0 / dir.lpNorm<Eigen::Infinity>());
        double a_prev = 0.0, f_prev = f0, d_prev = d0;
        double a_lo = 0, f_lo = 0, d_lo = 0, a_hi = 0, f_hi = 0, d_hi = 0;
        bool zooming = false, found = false;
        Eigen::VectorXd x_new, g_new;
        double f_new = 0;

        for (int step = 0; step < opts.max_line_search_steps; ++step) {
            if (zooming) alpha = detail::cubic_step(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi);
            x_new = res.x + alpha * dir;
            f_new = objective(x_new);
            ++res.evaluations;
            const bool finite = std::isfinite(f_new);
            if (finite) g_new = gradient(x_new);
            const double d_new = finite ? g_new.dot(dir) : std::numeric_limits<double>::quiet_NaN();
            if (!std::isfinite(d_new)) {
                // overflowed: no interpolation data, back off towards the last good point
                alpha = zooming ? 0.5 * (a_lo + alpha) : 0.5 * (a_prev + alpha);
                if (zooming) zooming = false, a_prev = a_lo, f_prev = f_lo, d_prev = d_lo;
                continue;
            }
            // Near a minimizer the exact decrease test drowns in rounding error on f;
            // the approximate-Wolfe test of Hager and Zhang uses derivatives instead.
            const bool approx_decrease =
                f_new <= f0 + 1e-10 * std::abs(f0) && d_new <= (2.0 * opts.c1 - 1.0) * d0;
            const bool armijo_fail = f_new > f0 + opts.c1 * alpha * d0 && !approx_decrease;

            if (!zooming) {
                if (armijo_fail || (step > 0 && f_new >= f_prev && !approx_decrease)) {
                    zooming = true;
                    a_lo = a_prev, f_lo = f_prev, d_lo = d_prev;
                    a_hi = alpha, f_hi = f_new, d_hi = d_new;
                    continue;
                }
                if (std::abs(d_new) <= -opts.c2 * d0) {
                    found = true;
                    break;
                }
                if (d_new >= 0) {
                    zooming = true;
                    a_lo = alpha, f_lo = f_new, d_lo = d_new;
                    a_hi = a_prev, f_hi = f_prev, d_hi = d_prev;
                    continue;
                }
                a_prev = alpha, f_prev = f_new, d_prev = d_new;
                alpha *= 4.0;
            } else {
                if (armijo_fail || (f_new >= f_lo && !approx_decrease)) {
                    a_hi = alpha, f_hi = f_new, d_hi = d_new;
                } else {
                    if (std::abs(d_new) <= -opts.c2 * d0) {
                        found = true;
                        break;
                    }
                    if (d_new * (a_hi - a_lo) >= 0) a_hi = a_lo, f_hi = f_lo, d_hi = d_lo;
                    a_lo = alpha, f_lo = f_new, d_lo = d_new;
                }
                if (std::abs(a_hi - a_lo) <= std::numeric_limits<double>::epsilon() * std::abs(a_lo)) break;
            }
        }

        if (!found) {
            // Accept a point that at least decreases f; otherwise restart from
            // steepest descent once before giving up.
            if (zooming && a_lo > 0 && f_lo < f0) {
                alpha = a_lo;
                x_new = res.x + alpha * dir;
                f_new = objective(x_new);
                g_new = gradient(x_new);
                ++res.evaluations;
            } else if (!reset_tried) {
                reset_tried = true;
                H.setIdentity();
                scaled = false;
                continue;
            } else {
                res.status = OptimStatus::LineSearchFailed;
                return res;
            }
        }

        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = g_new - res.gradient;
        res.x = x_new;
        res.value = f_new;
        res.gradient = g_new;
        ++res.iterations;
        reset_tried = false;

        const double sy = s.dot(y);
        if (sy > 1e-10 * s.norm() * y.norm()) {
            if (!scaled) {
                H = Eigen::MatrixXd::Identity(p, p) * (sy / y.squaredNorm());
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd Hy = H * y;
            const double yHy = y.dot(Hy);
            // (I - rho s y')H(I - rho y s') + rho s s'
            H.noalias() -= rho * (s * Hy.transpose() + Hy * s.transpose());
            H.noalias() += (rho * rho * yHy + rho) * (s * s.transpose());
        } else {
            ++res.skipped_updates;
        }
    }
}

}  // namespace sgmm
