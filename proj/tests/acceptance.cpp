// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion.
//
//   acceptance            run all criteria
//   acceptance 4 5 6      run a subset
//
// Exit status is nonzero when any selected criterion fails.

#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

using namespace sgmm;
namespace fs = std::filesystem;

namespace {

constexpr int kTableReps = 1000;
constexpr std::uint64_t kMasterSeed = 20240601;

struct Verdict {
    bool pass = true;
    std::string detail;
};

int study_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// Criteria 1-3: one setting at n=500, T=5, 1000 replicates.
Verdict table_criterion(int setting) {
    const auto t0 = std::chrono::steady_clock::now();
    const SettingDefinition def = paper_setting(setting);
    StudyOptions opts;
    opts.reps = kTableReps;
    opts.master_seed = kMasterSeed;
    opts.threads = study_threads();
    const SimulationReport rep = run_setting(def, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_report_text(std::cout, rep, &def);
    const auto checks = published_checks(rep, def);
    write_checks_text(std::cout, checks);

    Verdict v;
    int misses = 0;
    for (const auto& c : checks) misses += c.pass ? 0 : 1;
    int failed_fits = 0;
    for (const auto& r : rep.rows) failed_fits = std::max(failed_fits, r.n_failed);
    v.pass = misses == 0;
    std::ostringstream d;
    d << (checks.size() - misses) << "/" << checks.size() << " values within tolerance, " << failed_fits
      << " failed fits, " << std::fixed << std::setprecision(1) << secs << " s";
    v.detail = d.str();
    return v;
}

// Criterion 4: score-equation moments, W = I, from zero, against a closed-form
// least-squares solve on the same grouped-lag design.
Verdict least_squares_oracle() {
    std::mt19937_64 gen(404);
    double worst = 0.0;
    Verdict v;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = std::uniform_int_distribution<int>(20, 100)(gen);
        const int T = std::uniform_int_distribution<int>(3, 6)(gen);
        const auto ds = sgmm_test::random_panel(n, T, 1, gen());
        const auto spec = sgmm_test::one_covariate(CovariateClass::TypeI, sgmm_test::random_grouping(T, gen),
                                                   Link::Identity, true);
        const Eigen::MatrixXd X = sgmm_test::oracle_design(ds, spec);
        Eigen::VectorXd y(X.rows());
        for (int i = 0; i < n; ++i)
            for (int t = 0; t < T; ++t) y(i * T + t) = ds.outcomes(i, t);
        const Eigen::VectorXd ols = X.householderQr().solve(y);

        const MomentProblem problem(ds, spec, build_score_moment_system(T, spec));
        const auto res = minimize_objective(problem, Eigen::MatrixXd::Identity(problem.q(), problem.q()),
                                            Eigen::VectorXd::Zero(problem.p()), OptimizerOptions{});
        const double err = (res.x - ols).lpNorm<Eigen::Infinity>();
        worst = std::max(worst, err);
        if (!(err <= 1e-8)) v.pass = false;
    }
    std::ostringstream d;
    d << "20 panels, max |beta - ols| = " << std::scientific << std::setprecision(2) << worst << " (tol 1e-08)";
    v.detail = d.str();
    return v;
}

// Criterion 5: analytic Jacobian and gradient against central differences.
Verdict derivative_checks() {
    std::mt19937_64 gen(505);
    double worst_jac = 0.0, worst_grad = 0.0;
    int cases = 0;
    for (Link link : {Link::Identity, Link::Logit}) {
        for (int trial = 0; trial < 10; ++trial) {
            const int T = 3 + trial % 4;
            const auto ds = sgmm_test::random_panel(60, T, 2, gen(), link == Link::Logit);
            ModelSpec spec;
            spec.link = link;
            spec.intercept = trial % 2 == 0;
            spec.covariates = {{"x1", static_cast<CovariateClass>(trial % 3), sgmm_test::random_grouping(T, gen)},
                               {"x2", CovariateClass::TypeI, LagGrouping::first_lag_separate(T)}};
            const MomentProblem problem(ds, spec, build_moment_system(60, T, spec));
            Eigen::VectorXd beta(problem.p());
            std::normal_distribution<double> z(0.0, 0.5);
            for (Eigen::Index r = 0; r < beta.size(); ++r) beta(r) = z(gen);
            const Eigen::MatrixXd fd_jac =
                sgmm_test::central_difference([&](const Eigen::VectorXd& b) { return problem.moments(b); }, beta);
            worst_jac = std::max(worst_jac, sgmm_test::max_rel_error(problem.jacobian(beta), fd_jac));

            const Eigen::MatrixXd B = Eigen::MatrixXd::Random(problem.q(), problem.q());
            const Eigen::MatrixXd W =
                B * B.transpose() / problem.q() + Eigen::MatrixXd::Identity(problem.q(), problem.q());
            const Eigen::MatrixXd fd_grad = sgmm_test::central_difference(
                [&](const Eigen::VectorXd& b) { return Eigen::VectorXd::Constant(1, gmm_objective(b, problem, W)); },
                beta);
            worst_grad = std::max(worst_grad,
                                  sgmm_test::max_rel_error(objective_gradient(beta, problem, W).transpose(), fd_grad));
            ++cases;
        }
    }
    Verdict v;
    v.pass = worst_jac <= 1e-5 && worst_grad <= 1e-5;
    std::ostringstream d;
    d << cases << " cases, both links, max rel err jacobian " << std::scientific << std::setprecision(2) << worst_jac
      << ", gradient " << worst_grad << " (tol 1e-05)";
    v.detail = d.str();
    return v;
}

// Criterion 6: grouped moments equal block sums of the fully partitioned ones.
Verdict grouping_consistency() {
    std::mt19937_64 gen(606);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Link link = trial % 2 ? Link::Logit : Link::Identity;
        const int T = std::uniform_int_distribution<int>(2, 7)(gen);
        const int n = std::uniform_int_distribution<int>(5, 40)(gen);
        const auto ds = sgmm_test::random_panel(n, T, 1, gen(), link == Link::Logit);
        const auto g = sgmm_test::random_grouping(T, gen);
        const auto cls = static_cast<CovariateClass>(std::uniform_int_distribution<int>(0, 2)(gen));
        const auto semi = sgmm_test::one_covariate(cls, g, link, trial % 3 == 0);
        const auto full = sgmm_test::one_covariate(cls, LagGrouping::fully_partitioned(T), link, semi.intercept);
        const int off = semi.intercept ? 1 : 0;

        std::normal_distribution<double> z(0.0, 0.4);
        Eigen::VectorXd b_semi(semi.n_params());
        for (Eigen::Index r = 0; r < b_semi.size(); ++r) b_semi(r) = z(gen);
        Eigen::VectorXd b_full = Eigen::VectorXd::Zero(full.n_params());
        if (off) b_full(0) = b_semi(0);
        for (std::size_t blk = 0; blk < g.blocks().size(); ++blk)
            for (int k : g.blocks()[blk]) b_full(off + k) = b_semi(off + static_cast<Eigen::Index>(blk));

        const auto sys_semi = build_moment_system(n, T, semi);
        const auto sys_full = build_moment_system(n, T, full);
        const Eigen::VectorXd Gs = moment_vector(b_semi, ds, sys_semi, semi).G;
        const Eigen::VectorXd Gf = moment_vector(b_full, ds, sys_full, full).G;
        for (int m = 0; m < sys_semi.q(); ++m) {
            const auto& c = sys_semi.conditions[m];
            double sum = 0.0;
            for (int f = 0; f < sys_full.q(); ++f) {
                const auto& d = sys_full.conditions[f];
                if (d.s() != c.s() || d.t() != c.t() || (d.covariate < 0) != (c.covariate < 0)) continue;
                const auto& blk = g.blocks()[c.block];
                if (c.covariate < 0 || std::find(blk.begin(), blk.end(), d.block) != blk.end()) sum += Gf(f);
            }
            worst = std::max(worst, std::abs(Gs(m) - sum));
        }
    }
    Verdict v;
    v.pass = worst <= 1e-12;
    std::ostringstream d;
    d << "50 trials, max |G_semi - blocksum(G_full)| = " << std::scientific << std::setprecision(2) << worst
      << " (tol 1e-12)";
    v.detail = d.str();
    return v;
}

// Criterion 7: logistic panels, n=5000, T=4; blocks {0},{1,2,3}.
Verdict logit_recovery() {
    const LogitPanelParams base;
    const std::array<double, 3> truth{base.beta0, base.beta_contemp, base.beta_lag};
    EstimatorSpec est;
    est.name = "semi-partitioned";
    est.model = sgmm_test::one_covariate(CovariateClass::TypeI, LagGrouping::single_lag_block(base.T), Link::Logit,
                                         true, "x");
    est.targets = {{"beta0", 0, truth[0]}, {"beta_lag0", 1, truth[1]}, {"beta_lag", 2, truth[2]}};
    auto generate = [base](std::uint64_t seed) {
        LogitPanelParams p = base;
        p.seed = seed;
        return gen_logit_panel(p);
    };

    Verdict v;
    std::ostringstream d;
    const GmmFit single = two_step_fit(generate(replicate_seed(kMasterSeed, 0)), est.model);
    d << "estimate (" << std::fixed << std::setprecision(3);
    for (int r = 0; r < 3; ++r) {
        d << (r ? ", " : "") << single.beta_hat(r);
        if (!(std::abs(single.beta_hat(r) - truth[r]) <= 0.1)) v.pass = false;
    }
    if (!single.converged) v.pass = false;

    StudyOptions opts;
    opts.reps = 300;
    opts.master_seed = kMasterSeed;
    opts.threads = study_threads();
    const auto rep = run_coverage_study("logit", generate, {est}, opts);
    d << "); coverage over 300 reps (";
    for (std::size_t k = 0; k < rep.rows.size(); ++k) {
        d << (k ? ", " : "") << rep.rows[k].coverage;
        if (!(rep.rows[k].coverage >= 0.91 && rep.rows[k].coverage <= 0.985)) v.pass = false;
    }
    d << ") in [0.910, 0.985], " << rep.rows[0].n_failed << " failed fits";
    v.detail = d.str();
    return v;
}

double sample_var(const Eigen::VectorXd& a) { return (a.array() - a.mean()).square().sum() / (a.size() - 1); }

double sample_corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::ArrayXd ca = a.array() - a.mean(), cb = b.array() - b.mean();
    return (ca * cb).sum() / std::sqrt((ca * ca).sum() * (cb * cb).sum());
}

// Criterion 8: generator moments.
Verdict generator_moments() {
    Setting1Params p1;
    p1.n = 100000;
    p1.seed = 808;
    const auto s1 = gen_setting1(p1);
    double worst_var = 0.0, worst_corr = 0.0;
    for (int t = 0; t < p1.T; ++t) worst_var = std::max(worst_var, std::abs(sample_var(s1.covariates[0].col(t)) - 4.0 / 3));
    for (int t = 1; t < p1.T; ++t)
        worst_corr = std::max(worst_corr,
                              std::abs(sample_corr(s1.covariates[0].col(t), s1.covariates[0].col(t - 1)) - 0.5));

    Setting2Params p2;
    p2.n = 100000;
    p2.seed = 809;
    const auto s2 = gen_setting2(p2);
    double min_feedback = 1.0;
    for (int t = 1; t < p2.T; ++t)
        min_feedback = std::min(min_feedback, sample_corr(s2.covariates[0].col(t), s2.outcomes.col(t - 1)));

    Setting3Params p3;
    p3.gamma3 = p3.gamma4 = p3.gamma5 = 0.0;
    p3.seed = 810;
    const Setting1Params p3_as_1 = p3;
    const bool reduces = emit_csv_string(gen_setting3(p3)) == emit_csv_string(gen_setting1(p3_as_1));

    Verdict v;
    v.pass = worst_var <= 0.02 && worst_corr <= 0.01 && min_feedback > 0 && reduces;
    std::ostringstream d;
    d << std::fixed << std::setprecision(4) << "max |Var(x) - 4/3| " << worst_var << " (tol 0.02), max |corr - 0.5| "
      << worst_corr << " (tol 0.01), min feedback corr " << min_feedback << ", setting III reduces to I: "
      << (reduces ? "yes" : "no");
    v.detail = d.str();
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

// Criterion 9: simulate and replicate-tables write identical bytes when rerun.
Verdict determinism() {
    const fs::path root = fs::temp_directory_path() / ("sgmm_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string cli = SGMM_CLI_PATH;
    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    Verdict v;
    int compared = 0;
    for (const char* threads : {"1", "3"}) {
        for (const char* run_dir : {"a", "b"}) {
            const fs::path dir = root / threads / run_dir;
            const int rs = run("simulate --setting all --n 200 --seed 99 --out " + (dir / "sim").string());
            const int rr = run("replicate-tables --setting all --reps 25 --n 150 --seed 99 --threads " +
                               std::string(threads) + " --format csv,json,text --out " + (dir / "rep").string());
            if (rs != 0 || rr != 0) v.pass = false;
        }
        for (const char* sub : {"sim", "rep"})
            for (const auto& entry : fs::directory_iterator(root / threads / "a" / sub)) {
                const fs::path other = root / threads / "b" / sub / entry.path().filename();
                ++compared;
                if (slurp(entry.path()) != slurp(other)) v.pass = false;
            }
    }
    fs::remove_all(root);
    std::ostringstream d;
    d << compared << " artifacts compared across reruns (thread counts 1 and 3)";
    if (compared < 24) v.pass = false;
    v.detail = d.str();
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> selected;
    for (int k = 1; k < argc; ++k) selected.insert(std::atoi(argv[k]));
    if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

    const std::map<int, std::pair<const char*, std::function<Verdict()>>> criteria{
        {1, {"Setting I coverage table", [] { return table_criterion(1); }}},
        {2, {"Setting II coverage table", [] { return table_criterion(2); }}},
        {3, {"Setting III coverage table", [] { return table_criterion(3); }}},
        {4, {"least-squares oracle", least_squares_oracle}},
        {5, {"jacobian and gradient finite differences", derivative_checks}},
        {6, {"grouping consistency", grouping_consistency}},
        {7, {"logit recovery and coverage", logit_recovery}},
        {8, {"generator moments", generator_moments}},
        {9, {"determinism", determinism}},
    };

    std::vector<std::string> lines;
    bool all = true;
    for (int k : selected) {
        auto it = criteria.find(k);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion " << k << '\n';
            return 2;
        }
        Verdict v;
        try {
            v = it->second.second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        all = all && v.pass;
        std::ostringstream line;
        line << (v.pass ? "PASS" : "FAIL") << "  criterion " << k << "  " << it->second.first << ": " << v.detail;
        lines.push_back(line.str());
        std::cout << lines.back() << std::endl;
    }
    if (lines.size() > 1) {
        std::cout << "\nsummary\n";
        for (const auto& l : lines) std::cout << l << '\n';
    }
    return all ? 0 : 1;
}
