#pragma once

// Data generators for the three Monte Carlo settings (stationary AR(1)
// covariate with lag-1 effect, outcome-covariate feedback, deeper lag
// effects), a logistic panel generator, and the coverage-study driver.

#include "sgmm/data.hpp"
#include "sgmm/design.hpp"
#include "sgmm/estimator.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sgmm {

inline constexpr const char* kGeneratorId = "mt19937_64/splitmix64-seeded/std::normal_distribution";

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of replicate r: a pure function of (master seed, r).
inline std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t r) {
    return splitmix64(splitmix64(master) ^ splitmix64(r + 0x632be59bd9b4e019ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
    double normal(double sd = 1.0) { return sd * normal_(engine_); }
    double uniform() { return uniform_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

struct Setting1Params {
    int n = 500;
    int T = 5;
    double gamma1 = 1.0;
    double gamma2 = 1.0;
    double rho = 0.5;
    double var_b = 4.0;
    double var_e = 1.0;
    double var_eps = 1.0;
    /// When true, outcome lag terms also reach covariate values before the
    /// first observed occasion (x_0, x_-1, ...). When false, lag k enters the
    /// outcome at time t only for k <= t-1, matching what fitted models see.
    bool presample_lags = false;
    std::uint64_t seed = 0;

    void check() const {
        if (n < 1 || T < 1) throw std::invalid_argument("n and T must be positive");
        if (!(std::abs(rho) < 1)) throw std::invalid_argument("AR coefficient must satisfy |rho| < 1");
        if (!(var_b > 0 && var_e > 0 && var_eps > 0)) throw std::invalid_argument("variances must be positive");
    }
};

struct Setting3Params : Setting1Params {
    double gamma3 = 0.3;
    double gamma4 = 0.2;
    double gamma5 = 0.1;
};

struct Setting2Params {
    int n = 500;
    int T = 5;
    double beta = 1.0;
    double kappa = 0.4;
    double gamma = 0.2;
    double var_u = 1.0;
    double var_v = 1.0;
    /// Draw Y_0 from the stationary law of the outcome instead of Y_0 = 0.
    bool stationary_start = false;
    std::uint64_t seed = 0;

    void check() const {
        if (n < 1 || T < 1) throw std::invalid_argument("n and T must be positive");
        if (!(std::abs(kappa) < 1)) throw std::invalid_argument("outcome AR coefficient must satisfy |kappa| < 1");
        if (!(var_u > 0 && var_v > 0)) throw std::invalid_argument("variances must be positive");
        if (stationary_start && !(std::abs(beta * gamma + kappa) < 1))
            throw std::invalid_argument("stationary start needs |beta*gamma + kappa| < 1");
    }
};

namespace detail {

inline LongitudinalDataset empty_panel(int n, int T) {
    LongitudinalDataset ds;
    ds.outcomes.resize(n, T);
    ds.covariates.assign(1, Eigen::MatrixXd(n, T));
    ds.covariate_names = {"x"};
    assign_default_labels(ds);
    return ds;
}

// Stationary AR(1) covariate with four pre-sample values x_{-3..0} and
// outcome sum_k gammas[k] x_{t-k} + b_i + e_it.
inline LongitudinalDataset lagged_ar1_panel(const Setting1Params& p, const std::array<double, 5>& gammas) {
    p.check();
    constexpr int kPre = 4;
    LongitudinalDataset ds = empty_panel(p.n, p.T);
    Rng rng(p.seed);
    const double sd_b = std::sqrt(p.var_b), sd_e = std::sqrt(p.var_e), sd_eps = std::sqrt(p.var_eps);
    const double sd_stationary = std::sqrt(p.var_eps / (1.0 - p.rho * p.rho));
    std::vector<double> x(static_cast<std::size_t>(kPre + p.T));  // x[kPre-1+t] holds x_t, t = -3..T
    for (int i = 0; i < p.n; ++i) {
        const double b = rng.normal(sd_b);
        x[0] = rng.normal(sd_stationary);
        for (int k = 1; k < kPre; ++k) x[k] = p.rho * x[k - 1] + rng.normal(sd_eps);
        for (int t = 1; t <= p.T; ++t) {
            const int at = kPre - 1 + t;
            x[at] = p.rho * x[at - 1] + rng.normal(sd_eps);
            const double e = rng.normal(sd_e);
            double mean = gammas[0] * x[at];
            const int deepest = p.presample_lags ? 4 : std::min(4, t - 1);
            for (int k = 1; k <= deepest; ++k) mean += gammas[k] * x[at - k];
            ds.outcomes(i, t - 1) = mean + b + e;
            ds.covariates[0](i, t - 1) = x[at];
        }
    }
    return ds;
}

}  // namespace detail

/// Y_it = gamma1 x_it + gamma2 x_i,t-1 + b_i + e_it, x stationary AR(1).
inline LongitudinalDataset gen_setting1(const Setting1Params& p) {
    return detail::lagged_ar1_panel(p, {p.gamma1, p.gamma2, 0.0, 0.0, 0.0});
}

/// Setting 1 with additional effects of lags 2, 3 and 4.
inline LongitudinalDataset gen_setting3(const Setting3Params& p) {
    return detail::lagged_ar1_panel(p, {p.gamma1, p.gamma2, p.gamma3, p.gamma4, p.gamma5});
}

/// Feedback: x_it = gamma Y_i,t-1 + v_it, Y_it = beta x_it + kappa Y_i,t-1 + u_it.
inline LongitudinalDataset gen_setting2(const Setting2Params& p) {
    p.check();
    LongitudinalDataset ds = detail::empty_panel(p.n, p.T);
    Rng rng(p.seed);
    const double sd_u = std::sqrt(p.var_u), sd_v = std::sqrt(p.var_v);
    const double phi = p.beta * p.gamma + p.kappa;
    const double sd_y0 =
        p.stationary_start ? std::sqrt((p.beta * p.beta * p.var_v + p.var_u) / (1.0 - phi * phi)) : 0.0;
    for (int i = 0; i < p.n; ++i) {
        double y_prev = p.stationary_start ? rng.normal(sd_y0) : 0.0;
        for (int t = 1; t <= p.T; ++t) {
            const double x = p.gamma * y_prev + rng.normal(sd_v);
            const double y = p.beta * x + p.kappa * y_prev + rng.normal(sd_u);
            ds.covariates[0](i, t - 1) = x;
            ds.outcomes(i, t - 1) = y;
            y_prev = y;
        }
    }
    return ds;
}

/// Binary panel with logistic marginal mean
///   logit P(Y_it = 1) = beta0 + beta_contemp x_it + beta_lag sum_{k=1}^{t-1} x_i,t-k
/// and a stationary AR(1) covariate observed from t = 1.
struct LogitPanelParams {
    int n = 5000;
    int T = 4;
    double beta0 = -0.5;
    double beta_contemp = 0.8;
    double beta_lag = 0.3;
    double rho = 0.5;
    std::uint64_t seed = 0;
};

inline LongitudinalDataset gen_logit_panel(const LogitPanelParams& p) {
    if (p.n < 1 || p.T < 1 || !(std::abs(p.rho) < 1)) throw std::invalid_argument("invalid logit panel parameters");
    LongitudinalDataset ds = detail::empty_panel(p.n, p.T);
    Rng rng(p.seed);
    const double sd_stationary = std::sqrt(1.0 / (1.0 - p.rho * p.rho));
    for (int i = 0; i < p.n; ++i) {
        double x = rng.normal(sd_stationary);
        double lag_sum = 0.0;
        for (int t = 1; t <= p.T; ++t) {
            if (t > 1) {
                lag_sum += x;
                x = p.rho * x + rng.normal();
            }
            const double mu = logistic(p.beta0 + p.beta_contemp * x + p.beta_lag * lag_sum);
            ds.covariates[0](i, t - 1) = x;
            ds.outcomes(i, t - 1) = rng.uniform() < mu ? 1.0 : 0.0;
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Coverage studies

struct CoverageTarget {
    std::string label;
    int param = 0;
    double truth = 0.0;
};

struct EstimatorSpec {
    std::string name;
    ModelSpec model;
    std::vector<CoverageTarget> targets;
};

using PanelGenerator = std::function<LongitudinalDataset(std::uint64_t seed)>;

struct StudyOptions {
    int reps = 1000;
    std::uint64_t master_seed = 20240601;
    int threads = 1;
    FitOptions fit;
};

struct CoverageRow {
    std::string setting;
    std::string estimator;
    std::string parameter;
    double coverage = 0;
    double avg_ci_length = 0;
    double mean_estimate = 0;
    int n_converged = 0;
    int n_failed = 0;
};

struct SimulationReport {
    std::string setting;
    std::vector<CoverageRow> rows;
    int reps = 0;
    std::uint64_t master_seed = 0;
    std::string generator = kGeneratorId;

    const CoverageRow* find(const std::string& estimator, const std::string& parameter) const {
        for (const auto& r : rows)
            if (r.estimator == estimator && r.parameter == parameter) return &r;
        return nullptr;
    }
};

/// Fits every estimator to `reps` generated panels and aggregates 95% CI
/// coverage and length. Failed or non-converged fits are excluded from the
/// averages and counted in n_failed. The result does not depend on the
/// thread count.
inline SimulationReport run_coverage_study(const std::string& setting, const PanelGenerator& generate,
                                           const std::vector<EstimatorSpec>& estimators, const StudyOptions& opts) {
    if (opts.reps < 1) throw std::invalid_argument("reps must be >= 1");
    struct Outcome {
        bool ok = false;
        std::vector<double> estimate, lo, hi;
    };
    const std::size_t E = estimators.size();
    std::vector<Outcome> outcomes(static_cast<std::size_t>(opts.reps) * E);

    auto work = [&](int first, int stride) {
        for (int r = first; r < opts.reps; r += stride) {
            const LongitudinalDataset ds = generate(replicate_seed(opts.master_seed, static_cast<std::uint64_t>(r)));
            for (std::size_t e = 0; e < E; ++e) {
                Outcome& out = outcomes[static_cast<std::size_t>(r) * E + e];
                try {
                    const GmmFit fit = two_step_fit(ds, estimators[e].model, opts.fit);
                    out.ok = fit.converged && fit.standard_errors.allFinite();
                    for (const auto& target : estimators[e].targets) {
                        out.estimate.push_back(fit.beta_hat(target.param));
                        out.lo.push_back(fit.ci_lower(target.param));
                        out.hi.push_back(fit.ci_upper(target.param));
                    }
                } catch (const std::exception&) {
                    out.ok = false;
                }
            }
        }
    };
    const int threads = std::max(1, std::min(opts.threads, opts.reps));
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < threads; ++k) pool.emplace_back(work, k, threads);
        for (auto& th : pool) th.join();
    }

    SimulationReport report;
    report.setting = setting;
    report.reps = opts.reps;
    report.master_seed = opts.master_seed;
    for (std::size_t e = 0; e < E; ++e) {
        const auto& est = estimators[e];
        for (std::size_t k = 0; k < est.targets.size(); ++k) {
            CoverageRow row{setting, est.name, est.targets[k].label};
            double covered = 0, length = 0, estimate = 0;
            for (int r = 0; r < opts.reps; ++r) {
                const Outcome& out = outcomes[static_cast<std::size_t>(r) * E + e];
                if (!out.ok) {
                    ++row.n_failed;
                    continue;
                }
                ++row.n_converged;
                const double truth = est.targets[k].truth;
                covered += (out.lo[k] <= truth && truth <= out.hi[k]) ? 1.0 : 0.0;
                length += out.hi[k] - out.lo[k];
                estimate += out.estimate[k];
            }
            if (row.n_converged > 0) {
                row.coverage = covered / row.n_converged;
                row.avg_ci_length = length / row.n_converged;
                row.mean_estimate = estimate / row.n_converged;
            } else {
                row.coverage = row.avg_ci_length = row.mean_estimate = std::nan("");
            }
            report.rows.push_back(row);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// The three published settings

inline constexpr const char* kLagOneOnly = "lag1-only";
inline constexpr const char* kSemiPartitioned = "semi-partitioned";
inline constexpr const char* kFullyPartitioned = "fully-partitioned";

struct PublishedCell {
    double coverage;
    double ci_length;
};

/// Published coverage/length for one estimator: first and second target.
struct PublishedRow {
    const char* estimator;
    PublishedCell first;
    PublishedCell second;
};

struct SettingDefinition {
    int number = 1;
    std::string name;
    std::array<std::string, 2> target_labels;
    PanelGenerator generate;
    std::vector<EstimatorSpec> estimators;
    std::array<PublishedRow, 3> published;
};

/// Estimators compared in every setting: lags {0},{1}; {0},{1},{2..T-1};
/// and one block per lag. No intercept, identity link.
inline std::vector<EstimatorSpec> comparison_estimators(int T, CovariateClass cls,
                                                        const std::array<std::string, 2>& labels,
                                                        const std::array<double, 2>& truth) {
    auto make = [&](const char* name, LagGrouping grouping) {
        EstimatorSpec e;
        e.name = name;
        e.model.link = Link::Identity;
        e.model.intercept = false;
        e.model.covariates = {{"x", cls, std::move(grouping)}};
        e.targets = {{labels[0], 0, truth[0]}, {labels[1], 1, truth[1]}};
        return e;
    };
    return {make(kLagOneOnly, LagGrouping::lag_one_only()),
            make(kSemiPartitioned, LagGrouping::first_lag_separate(T)),
            make(kFullyPartitioned, LagGrouping::fully_partitioned(T))};
}

inline SettingDefinition paper_setting(int number, int n = 500, int T = 5) {
    SettingDefinition def;
    def.number = number;
    switch (number) {
        case 1: {
            def.name = "setting1";
            def.target_labels = {"gamma1", "gamma2"};
            Setting1Params base;
            base.n = n;
            base.T = T;
            def.generate = [base](std::uint64_t seed) {
                Setting1Params p = base;
                p.seed = seed;
                return gen_setting1(p);
            };
            def.estimators = comparison_estimators(T, CovariateClass::TypeI, def.target_labels, {1.0, 1.0});
            def.published = {{{kLagOneOnly, {.914, .0770}, {.94, .0844}},
                              {kSemiPartitioned, {.914, .0820}, {.94, .0845}},
                              {kFullyPartitioned, {.916, .0823}, {.944, .0872}}}};
            break;
        }
        case 2: {
            def.name = "setting2";
            def.target_labels = {"theta1", "theta2"};
            Setting2Params base;
            base.n = n;
            base.T = T;
            def.generate = [base](std::uint64_t seed) {
                Setting2Params p = base;
                p.seed = seed;
                return gen_setting2(p);
            };
            // lag-k coefficient of the distributed-lag expansion: beta * kappa^k
            def.estimators = comparison_estimators(T, CovariateClass::TypeIII, def.target_labels,
                                                   {base.beta, base.beta * base.kappa});
            def.published = {{{kLagOneOnly, {.944, .177}, {.944, .768}},
                              {kSemiPartitioned, {.944, .182}, {.944, .852}},
                              {kFullyPartitioned, {.948, .188}, {.951, .923}}}};
            break;
        }
        case 3: {
            def.name = "setting3";
            def.target_labels = {"gamma1", "gamma2"};
            Setting3Params base;
            base.n = n;
            base.T = T;
            def.generate = [base](std::uint64_t seed) {
                Setting3Params p = base;
                p.seed = seed;
                return gen_setting3(p);
            };
            def.estimators = comparison_estimators(T, CovariateClass::TypeI, def.target_labels, {1.0, 1.0});
            def.published = {{{kLagOneOnly, {.342, .0834}, {.361, .0902}},
                              {kSemiPartitioned, {.906, .0822}, {.820, .0848}},
                              {kFullyPartitioned, {.915, .0822}, {.944, .0872}}}};
            break;
        }
        default: throw std::invalid_argument("unknown setting " + std::to_string(number));
    }
    return def;
}

inline SimulationReport run_setting(const SettingDefinition& def, const StudyOptions& opts) {
    return run_coverage_study(def.name, def.generate, def.estimators, opts);
}

// ---------------------------------------------------------------------------
// Report output

namespace detail {
inline std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}
}  // namespace detail

/// setting,estimator,parameter,coverage,avg_ci_length,n_converged,n_failed
inline void write_report_csv(std::ostream& out, const SimulationReport& report) {
    out << "setting,estimator,parameter,coverage,avg_ci_length,n_converged,n_failed\n";
    for (const auto& r : report.rows)
        out << r.setting << ',' << r.estimator << ',' << r.parameter << ',' << detail::fixed(r.coverage, 4) << ','
            << detail::fixed(r.avg_ci_length, 5) << ',' << r.n_converged << ',' << r.n_failed << '\n';
}

/// Coverage / average CI length table, one line per estimator.
inline void write_report_text(std::ostream& out, const SimulationReport& report,
                              const SettingDefinition* def = nullptr) {
    std::vector<std::string> estimators, params;
    for (const auto& r : report.rows) {
        if (std::find(estimators.begin(), estimators.end(), r.estimator) == estimators.end())
            estimators.push_back(r.estimator);
        if (std::find(params.begin(), params.end(), r.parameter) == params.end()) params.push_back(r.parameter);
    }
    out << report.setting << " (reps=" << report.reps << ", seed=" << report.master_seed << ")\n";
    out << std::left << std::setw(20) << "";
    for (const auto& p : params) out << std::setw(28) << ("| " + p);
    out << '\n' << std::setw(20) << "estimator";
    for (std::size_t k = 0; k < params.size(); ++k) out << std::setw(14) << "| coverage" << std::setw(14) << "avg CI len";
    out << '\n';
    for (const auto& e : estimators) {
        out << std::setw(20) << e;
        for (const auto& p : params) {
            const CoverageRow* r = report.find(e, p);
            out << std::setw(14) << ("| " + detail::fixed(r->coverage, 3)) << std::setw(14)
                << detail::fixed(r->avg_ci_length, 4);
        }
        if (def) {
            out << "  [published";
            for (const auto& row : def->published)
                if (e == row.estimator)
                    out << ' ' << detail::fixed(row.first.coverage, 3) << '/' << detail::fixed(row.first.ci_length, 4)
                        << ", " << detail::fixed(row.second.coverage, 3) << '/'
                        << detail::fixed(row.second.ci_length, 4);
            out << ']';
        }
        const CoverageRow* any = report.find(e, params.front());
        if (any && any->n_failed > 0) out << "  (" << any->n_failed << " failed)";
        out << '\n';
    }
}

}  // namespace sgmm
