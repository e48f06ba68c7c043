#pragma once

// Serialization of fits and coverage studies, and tolerance checks of a
// study against the published coverage tables.

#include "sgmm/data.hpp"
#include "sgmm/estimator.hpp"
#include "sgmm/simulate.hpp"

#include "json.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

namespace sgmm {

namespace detail {

inline nlohmann::json number_or_null(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(number_or_null(v(k)));
    return out;
}

inline std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : std::string("NA"); }

}  // namespace detail

inline nlohmann::json fit_to_json(const GmmFit& fit) {
    nlohmann::json j;
    j["link"] = to_string(fit.link);
    j["param_names"] = fit.param_names;
    j["beta_hat"] = detail::vector_json(fit.beta_hat);
    j["beta_step1"] = detail::vector_json(fit.beta_step1);
    nlohmann::json cov = nlohmann::json::array();
    for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
        Eigen::VectorXd row = fit.covariance.row(r).transpose();
        cov.push_back(detail::vector_json(row));
    }
    j["covariance"] = std::move(cov);
    j["standard_errors"] = detail::vector_json(fit.standard_errors);
    j["z_stats"] = detail::vector_json(fit.z_stats);
    j["p_values"] = detail::vector_json(fit.p_values);
    j["ci_lower"] = detail::vector_json(fit.ci_lower);
    j["ci_upper"] = detail::vector_json(fit.ci_upper);
    j["objective_step1"] = detail::number_or_null(fit.objective_step1);
    j["objective_step2"] = detail::number_or_null(fit.objective_step2);
    j["j_statistic"] = detail::number_or_null(fit.j_statistic);
    j["n_subjects"] = fit.n_subjects;
    j["n_times"] = fit.n_times;
    j["n_moments"] = fit.n_moments;
    j["n_params"] = fit.n_params;
    j["converged"] = fit.converged;
    j["status_step1"] = to_string(fit.status_step1);
    j["status_step2"] = to_string(fit.status_step2);
    j["iterations_step1"] = fit.iterations_step1;
    j["iterations_step2"] = fit.iterations_step2;
    j["weighting"] = {{"rank", fit.weighting_rank},
                      {"ridge", fit.weighting_ridge},
                      {"condition", detail::number_or_null(fit.weighting_condition)}};
    return j;
}

/// param,estimate,se,z,p,ci_lo,ci_hi; undefined values are written as NA.
inline void write_coefficients_csv(std::ostream& out, const GmmFit& fit) {
    out << "param,estimate,se,z,p,ci_lo,ci_hi\n";
    for (int r = 0; r < fit.n_params; ++r) {
        out << detail::csv_field(fit.param_names[static_cast<std::size_t>(r)]) << ','
            << detail::csv_number(fit.beta_hat(r)) << ',' << detail::csv_number(fit.standard_errors(r)) << ','
            << detail::csv_number(fit.z_stats(r)) << ',' << detail::csv_number(fit.p_values(r)) << ','
            << detail::csv_number(fit.ci_lower(r)) << ',' << detail::csv_number(fit.ci_upper(r)) << '\n';
    }
}

/// Human-readable coefficient table.
inline void write_fit_text(std::ostream& out, const GmmFit& fit) {
    out << "two-step GMM, " << to_string(fit.link) << " link: n=" << fit.n_subjects << ", T=" << fit.n_times
        << ", q=" << fit.n_moments << ", p=" << fit.n_params << '\n';
    out << std::left << std::setw(22) << "param" << std::right << std::setw(12) << "estimate" << std::setw(12) << "se"
        << std::setw(10) << "z" << std::setw(10) << "p" << std::setw(24) << "95% CI" << '\n';
    for (int r = 0; r < fit.n_params; ++r) {
        out << std::left << std::setw(22) << fit.param_names[static_cast<std::size_t>(r)] << std::right
            << std::setw(12) << detail::fixed(fit.beta_hat(r), 5) << std::setw(12)
            << detail::fixed(fit.standard_errors(r), 5) << std::setw(10) << detail::fixed(fit.z_stats(r), 3)
            << std::setw(10) << detail::fixed(fit.p_values(r), 4) << std::setw(24)
            << ("(" + detail::fixed(fit.ci_lower(r), 4) + ", " + detail::fixed(fit.ci_upper(r), 4) + ")") << '\n';
    }
    out << "objective: step1 " << detail::fixed(fit.objective_step1, 8) << ", step2 "
        << detail::fixed(fit.objective_step2, 8) << "; J = " << detail::fixed(fit.j_statistic, 4) << '\n';
    out << "status: step1 " << to_string(fit.status_step1) << " (" << fit.iterations_step1 << " it), step2 "
        << to_string(fit.status_step2) << " (" << fit.iterations_step2 << " it)";
    if (fit.weighting_ridge) out << "; weighting matrix ridge-regularized";
    out << '\n';
}

inline nlohmann::json report_to_json(const SimulationReport& report) {
    nlohmann::json j;
    j["setting"] = report.setting;
    j["reps"] = report.reps;
    j["master_seed"] = report.master_seed;
    j["generator"] = report.generator;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"estimator", r.estimator},
                        {"parameter", r.parameter},
                        {"coverage", detail::number_or_null(r.coverage)},
                        {"avg_ci_length", detail::number_or_null(r.avg_ci_length)},
                        {"mean_estimate", detail::number_or_null(r.mean_estimate)},
                        {"n_converged", r.n_converged},
                        {"n_failed", r.n_failed}});
    j["rows"] = std::move(rows);
    return j;
}

// ---------------------------------------------------------------------------
// Tolerances against the published tables

struct ToleranceCheck {
    std::string label;  // e.g. "semi-partitioned gamma1 coverage"
    double observed = 0;
    double published = 0;
    double lo = 0;  // accepted interval [lo, hi]
    double hi = 0;
    bool pass = false;
};

namespace detail {

inline ToleranceCheck make_check(std::string label, double observed, double published, double lo, double hi) {
    constexpr double slack = 1e-9;  // coverage is k/reps; keep boundary ties inside
    return {std::move(label), observed, published, lo, hi,
            std::isfinite(observed) && lo - slack <= observed && observed <= hi + slack};
}

inline ToleranceCheck coverage_within(const SimulationReport& rep, const PublishedRow& row, int which,
                                      const std::string& param, double tol) {
    const PublishedCell& cell = which == 0 ? row.first : row.second;
    const CoverageRow* r = rep.find(row.estimator, param);
    const double obs = r ? r->coverage : std::nan("");
    return make_check(std::string(row.estimator) + " " + param + " coverage", obs, cell.coverage, cell.coverage - tol,
                      cell.coverage + tol);
}

inline ToleranceCheck length_within(const SimulationReport& rep, const PublishedRow& row, int which,
                                    const std::string& param, double rel) {
    const PublishedCell& cell = which == 0 ? row.first : row.second;
    const CoverageRow* r = rep.find(row.estimator, param);
    const double obs = r ? r->avg_ci_length : std::nan("");
    return make_check(std::string(row.estimator) + " " + param + " CI length", obs, cell.ci_length,
                      cell.ci_length * (1 - rel), cell.ci_length * (1 + rel));
}

inline const PublishedRow& published_row(const SettingDefinition& def, const std::string& estimator) {
    for (const auto& row : def.published)
        if (estimator == row.estimator) return row;
    throw std::invalid_argument("no published row for " + estimator);
}

}  // namespace detail

/// Checks of a study against the published table for its setting:
///   setting 1: every estimator, coverage +-0.025 and CI length +-10%;
///   setting 2: semi-partitioned coverage +-0.025 and length +-10%,
///              fully partitioned length +-10%;
///   setting 3: lag-1-only coverage below 0.45, semi-partitioned coverage
///              +-0.04, fully partitioned coverage +-0.025.
inline std::vector<ToleranceCheck> published_checks(const SimulationReport& rep, const SettingDefinition& def) {
    std::vector<ToleranceCheck> out;
    const auto& labels = def.target_labels;
    switch (def.number) {
        case 1:
            for (const auto& row : def.published)
                for (int k = 0; k < 2; ++k) {
                    out.push_back(detail::coverage_within(rep, row, k, labels[k], 0.025));
                    out.push_back(detail::length_within(rep, row, k, labels[k], 0.10));
                }
            break;
        case 2: {
            const auto& semi = detail::published_row(def, kSemiPartitioned);
            const auto& full = detail::published_row(def, kFullyPartitioned);
            for (int k = 0; k < 2; ++k) out.push_back(detail::coverage_within(rep, semi, k, labels[k], 0.025));
            for (int k = 0; k < 2; ++k) out.push_back(detail::length_within(rep, semi, k, labels[k], 0.10));
            for (int k = 0; k < 2; ++k) out.push_back(detail::length_within(rep, full, k, labels[k], 0.10));
            break;
        }
        case 3: {
            const auto& lag1 = detail::published_row(def, kLagOneOnly);
            for (int k = 0; k < 2; ++k) {
                const CoverageRow* r = rep.find(kLagOneOnly, labels[k]);
                const PublishedCell& cell = k == 0 ? lag1.first : lag1.second;
                out.push_back(detail::make_check(std::string(kLagOneOnly) + " " + labels[k] + " coverage < 0.45",
                                                 r ? r->coverage : std::nan(""), cell.coverage, 0.0,
                                                 0.45 - 1e-8));
            }
            const auto& semi = detail::published_row(def, kSemiPartitioned);
            const auto& full = detail::published_row(def, kFullyPartitioned);
            for (int k = 0; k < 2; ++k) out.push_back(detail::coverage_within(rep, semi, k, labels[k], 0.04));
            for (int k = 0; k < 2; ++k) out.push_back(detail::coverage_within(rep, full, k, labels[k], 0.025));
            break;
        }
        default: throw std::invalid_argument("unknown setting");
    }
    return out;
}

inline void write_checks_text(std::ostream& out, const std::vector<ToleranceCheck>& checks) {
    for (const auto& c : checks)
        out << (c.pass ? "  ok    " : "  MISS  ") << std::left << std::setw(44) << c.label << std::right
            << " observed " << detail::fixed(c.observed, 4) << "  published " << detail::fixed(c.published, 4)
            << "  accept [" << detail::fixed(c.lo, 4) << ", " << detail::fixed(c.hi, 4) << "]\n";
}

}  // namespace sgmm
