// sgmm: fit grouped-lag GMM models to CSV panels and run the coverage studies.
//
//   sgmm fit --data panel.csv [--spec model.spec] [--estimator semi] --out DIR
//   sgmm simulate --setting 1 --seed 7 --out DIR
//   sgmm replicate-tables [--setting all] [--reps 1000] [--seed 20240601] --out DIR
//
// Exit codes: 0 success, 1 input or model error, 2 fit did not converge
// (artifacts still written), 3 replication outside the published tolerances.

#include "sgmm/sgmm.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNotConverged = 2;
constexpr int kExitTolerance = 3;
constexpr int kQuickModeReps = 200;

struct FitArgs {
    std::string data;
    std::string spec;
    std::string estimator;
    std::string out;
    std::vector<std::string> formats{"csv", "json"};
    int max_iterations = 500;
};

struct SimulateArgs {
    std::string setting = "1";
    int n = 500;
    int T = 5;
    std::uint64_t seed = 20240601;
    std::uint64_t replicate = 0;
    std::string out;
};

struct ReplicateArgs {
    std::string setting = "all";
    int reps = 1000;
    std::uint64_t seed = 20240601;
    int threads = 1;
    int n = 500;
    int T = 5;
    std::string out;
    std::vector<std::string> formats{"csv", "text"};
};

std::vector<int> settings_of(const std::string& s) {
    if (s == "all") return {1, 2, 3};
    return {std::stoi(s)};
}

void write_file(const fs::path& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << contents;
}

bool has(const std::vector<std::string>& v, const char* x) { return std::find(v.begin(), v.end(), x) != v.end(); }

int cmd_fit(const FitArgs& a) {
    std::ifstream in(a.data, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + a.data);
    const sgmm::LongitudinalDataset ds = sgmm::load_csv(in);

    sgmm::ModelTemplate tmpl;
    if (!a.spec.empty()) {
        std::ifstream spec(a.spec);
        if (!spec) throw std::runtime_error("cannot open " + a.spec);
        tmpl = sgmm::parse_model_spec(spec);
    }
    if (!a.estimator.empty()) {
        const sgmm::GroupingRule rule = sgmm::GroupingRule::parse(a.estimator);
        tmpl.default_blocks = rule;
        for (auto& c : tmpl.covariates) c.blocks = rule;
    }
    const sgmm::ModelSpec model = tmpl.instantiate(ds);

    sgmm::FitOptions opts;
    opts.optimizer.max_iterations = a.max_iterations;
    const sgmm::GmmFit fit = sgmm::two_step_fit(ds, model, opts);

    fs::create_directories(a.out);
    std::ostringstream text;
    sgmm::write_fit_text(text, fit);
    std::cout << text.str();
    if (has(a.formats, "csv")) {
        std::ostringstream s;
        sgmm::write_coefficients_csv(s, fit);
        write_file(fs::path(a.out) / "coefficients.csv", s.str());
    }
    if (has(a.formats, "json")) write_file(fs::path(a.out) / "fit.json", sgmm::fit_to_json(fit).dump(2) + "\n");
    if (has(a.formats, "text")) write_file(fs::path(a.out) / "fit.txt", text.str());

    if (!fit.converged) {
        std::cerr << "warning: optimizer did not converge (step1 " << to_string(fit.status_step1) << ", step2 "
                  << to_string(fit.status_step2) << ")\n";
        return kExitNotConverged;
    }
    return kExitOk;
}

int cmd_simulate(const SimulateArgs& a) {
    fs::create_directories(a.out);
    const std::uint64_t seed = sgmm::replicate_seed(a.seed, a.replicate);
    for (int k : settings_of(a.setting)) {
        const sgmm::SettingDefinition def = sgmm::paper_setting(k, a.n, a.T);
        const fs::path path = fs::path(a.out) / (def.name + ".csv");
        write_file(path, sgmm::emit_csv_string(def.generate(seed)));
        std::cout << "wrote " << path.string() << '\n';
    }
    return kExitOk;
}

int cmd_replicate(const ReplicateArgs& a) {
    fs::create_directories(a.out);
    const bool quick = a.reps < kQuickModeReps;
    if (quick)
        std::cerr << "warning: quick mode (reps < " << kQuickModeReps
                  << "): Monte Carlo error dominates, tolerance checks skipped\n";
    sgmm::StudyOptions opts;
    opts.reps = a.reps;
    opts.master_seed = a.seed;
    opts.threads = a.threads;

    int misses = 0;
    for (int k : settings_of(a.setting)) {
        const sgmm::SettingDefinition def = sgmm::paper_setting(k, a.n, a.T);
        const sgmm::SimulationReport rep = sgmm::run_setting(def, opts);
        std::ostringstream text;
        sgmm::write_report_text(text, rep, &def);
        std::cout << text.str();
        if (has(a.formats, "csv")) {
            std::ostringstream s;
            sgmm::write_report_csv(s, rep);
            write_file(fs::path(a.out) / (def.name + ".csv"), s.str());
        }
        if (has(a.formats, "json"))
            write_file(fs::path(a.out) / (def.name + ".json"), sgmm::report_to_json(rep).dump(2) + "\n");
        if (has(a.formats, "text")) write_file(fs::path(a.out) / (def.name + ".txt"), text.str());
        if (!quick) {
            const auto checks = sgmm::published_checks(rep, def);
            sgmm::write_checks_text(std::cout, checks);
            for (const auto& c : checks) misses += c.pass ? 0 : 1;
        }
        std::cout << '\n';
    }
    if (!quick && misses > 0) {
        std::cerr << misses << " value(s) outside the published tolerances\n";
        return kExitTolerance;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grouped-lag GMM for longitudinal marginal models"};
    app.require_subcommand(1);
    const std::vector<std::string> format_names{"csv", "json", "text"};

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "Two-step GMM fit of a long-format CSV panel");
    fit->add_option("--data", fa.data, "CSV with columns id,time,y and one column per covariate")
        ->required()
        ->check(CLI::ExistingFile);
    fit->add_option("--spec", fa.spec, "model specification file")->check(CLI::ExistingFile);
    fit->add_option("--estimator", fa.estimator,
                    "lag grouping for every covariate: aggregated, semi:first-lag-separate, semi:single-block, "
                    "lag1-only, full, or a list such as [[0],[1],[2,3]]");
    fit->add_option("--out", fa.out, "output directory")->required();
    fit->add_option("--format", fa.formats, "artifacts to write")->check(CLI::IsMember(format_names))->delimiter(',');
    fit->add_option("--max-iter", fa.max_iterations, "BFGS iteration cap per step")->check(CLI::NonNegativeNumber);

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Write one simulated panel per setting");
    sim->add_option("--setting", sa.setting, "1, 2, 3 or all")->check(CLI::IsMember({"1", "2", "3", "all"}));
    sim->add_option("--n", sa.n, "subjects")->check(CLI::PositiveNumber);
    sim->add_option("--T", sa.T, "occasions")->check(CLI::Range(2, 1000));
    sim->add_option("--seed", sa.seed, "master seed");
    sim->add_option("--replicate", sa.replicate, "replicate index whose panel is written");
    sim->add_option("--out", sa.out, "output directory")->required();

    ReplicateArgs ra;
    auto* rep = app.add_subcommand("replicate-tables", "Coverage studies for the three simulation settings");
    rep->add_option("--setting", ra.setting, "1, 2, 3 or all")->check(CLI::IsMember({"1", "2", "3", "all"}));
    rep->add_option("--reps", ra.reps, "replicates per setting")->check(CLI::PositiveNumber);
    rep->add_option("--seed", ra.seed, "master seed");
    rep->add_option("--threads", ra.threads, "worker threads")->check(CLI::PositiveNumber);
    rep->add_option("--n", ra.n, "subjects per panel")->check(CLI::PositiveNumber);
    rep->add_option("--T", ra.T, "occasions per panel")->check(CLI::Range(2, 1000));
    rep->add_option("--out", ra.out, "output directory")->required();
    rep->add_option("--format", ra.formats, "report files to write")->check(CLI::IsMember(format_names))->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*fit) return cmd_fit(fa);
        if (*sim) return cmd_simulate(sa);
        if (*rep) return cmd_replicate(ra);
    } catch (const sgmm::Underidentified& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitInput;
}
