#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace sgmm;

TEST(ModelFile, ExplicitSections) {
    const auto tmpl = parse_model_spec_string(R"(# comment
link = logit
intercept = false
class = II

[x2]
blocks = [[0],[1],[2,3]]   # trailing comment
[covariate x1]
class = III
blocks = full
)");
    EXPECT_EQ(tmpl.link, Link::Logit);
    EXPECT_FALSE(tmpl.intercept);
    ASSERT_EQ(tmpl.covariates.size(), 2u);
    const auto ds = sgmm_test::random_panel(5, 4, 2, 1);
    const auto spec = tmpl.instantiate(ds);
    EXPECT_EQ(spec.covariates[0].name, "x2");
    EXPECT_EQ(spec.covariates[0].cls, CovariateClass::TypeII);
    EXPECT_EQ(spec.covariates[0].grouping.blocks(), (std::vector<LagGrouping::Block>{{0}, {1}, {2, 3}}));
    EXPECT_EQ(spec.covariates[1].cls, CovariateClass::TypeIII);
    EXPECT_EQ(spec.covariates[1].grouping, LagGrouping::fully_partitioned(4));
}

TEST(ModelFile, DefaultsCoverEveryCovariate) {
    const auto ds = sgmm_test::random_panel(5, 5, 3, 1);
    const auto spec = parse_model_spec_string("blocks = aggregated\n").instantiate(ds);
    EXPECT_TRUE(spec.intercept);
    EXPECT_EQ(spec.link, Link::Identity);
    ASSERT_EQ(spec.covariates.size(), 3u);
    for (const auto& c : spec.covariates) EXPECT_EQ(c.grouping, LagGrouping::aggregated());
    const auto semi = parse_model_spec_string("").instantiate(ds);
    EXPECT_EQ(semi.covariates[0].grouping, LagGrouping::first_lag_separate(5));
}

TEST(ModelFile, Shortcuts) {
    EXPECT_EQ(GroupingRule::parse("semi:first-lag-separate").resolve(5), LagGrouping::first_lag_separate(5));
    EXPECT_EQ(GroupingRule::parse("semi:single-block").resolve(4), LagGrouping::single_lag_block(4));
    EXPECT_EQ(GroupingRule::parse("lag1-only").resolve(6), LagGrouping::lag_one_only());
    EXPECT_EQ(GroupingRule::parse("full").resolve(3), LagGrouping::fully_partitioned(3));
    EXPECT_EQ(GroupingRule::parse("aggregated").resolve(3), LagGrouping::aggregated());
}

TEST(ModelFile, Errors) {
    EXPECT_THROW(parse_model_spec_string("link = probit\n"), SpecError);
    EXPECT_THROW(parse_model_spec_string("colour = red\n"), SpecError);
    EXPECT_THROW(parse_model_spec_string("just words\n"), SpecError);
    EXPECT_THROW(parse_model_spec_string("[x]\nclass = IV\n"), SpecError);
    EXPECT_THROW(parse_model_spec_string("blocks = [[1],[2]]\n"), SpecError);
    EXPECT_THROW(parse_model_spec_string("blocks = [[0],[1,3]]\n"), SpecError);
    EXPECT_THROW(parse_model_spec_string("blocks = [[0],\n"), SpecError);
    try {
        parse_model_spec_string("link = identity\n\nintercept = maybe\n");
        FAIL();
    } catch (const SpecError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    const auto ds = sgmm_test::random_panel(5, 3, 1, 1);
    EXPECT_THROW(parse_model_spec_string("[nope]\n").instantiate(ds), SpecError);
    EXPECT_THROW(parse_model_spec_string("blocks = [[0],[1],[2,3]]\n").instantiate(ds), LagOutOfRange);
}

TEST(Report, CoefficientCsvAndJson) {
    Setting1Params p;
    p.n = 300;
    p.seed = 8;
    const auto ds = gen_setting1(p);
    const auto spec = parse_model_spec_string("blocks = lag1-only\n").instantiate(ds);
    const auto fit = two_step_fit(ds, spec);

    std::ostringstream csv;
    write_coefficients_csv(csv, fit);
    std::istringstream lines(csv.str());
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "param,estimate,se,z,p,ci_lo,ci_hi");
    std::getline(lines, line);
    EXPECT_EQ(line.substr(0, 12), "(Intercept),");
    std::getline(lines, line);
    EXPECT_EQ(line.substr(0, 7), "x:lag0,");
    const double est = std::stod(line.substr(7, line.find(',', 7) - 7));
    EXPECT_EQ(est, fit.beta_hat(1));

    const auto j = fit_to_json(fit);
    EXPECT_EQ(j["n_params"], 3);
    EXPECT_EQ(j["param_names"][2], "x:lag1");
    EXPECT_EQ(j["beta_hat"][1].get<double>(), fit.beta_hat(1));
    EXPECT_EQ(j["covariance"].size(), 3u);
    EXPECT_TRUE(j["converged"].get<bool>());

    GmmFit degenerate = fit;
    degenerate.p_values(0) = std::nan("");
    EXPECT_TRUE(fit_to_json(degenerate)["p_values"][0].is_null());
    std::ostringstream na;
    write_coefficients_csv(na, degenerate);
    EXPECT_NE(na.str().find(",NA,"), std::string::npos);
}

TEST(Report, PublishedChecks) {
    const auto def = paper_setting(3);
    SimulationReport rep;
    rep.setting = def.name;
    for (const auto& row : def.published) {
        rep.rows.push_back({def.name, row.estimator, "gamma1", row.first.coverage, row.first.ci_length, 1, 0, 0});
        rep.rows.push_back({def.name, row.estimator, "gamma2", row.second.coverage, row.second.ci_length, 1, 0, 0});
    }
    auto checks = published_checks(rep, def);
    EXPECT_EQ(checks.size(), 6u);
    for (const auto& c : checks) EXPECT_TRUE(c.pass) << c.label;
    rep.rows[0].coverage = 0.46;
    checks = published_checks(rep, def);
    EXPECT_FALSE(checks[0].pass);

    const auto def1 = paper_setting(1);
    SimulationReport rep1;
    for (const auto& row : def1.published) {
        rep1.rows.push_back({"", row.estimator, "gamma1", row.first.coverage + 0.025, row.first.ci_length * 1.1, 1, 0, 0});
        rep1.rows.push_back({"", row.estimator, "gamma2", row.second.coverage - 0.026, row.second.ci_length, 1, 0, 0});
    }
    checks = published_checks(rep1, def1);
    EXPECT_EQ(checks.size(), 12u);
    int pass = 0;
    for (const auto& c : checks) pass += c.pass;
    EXPECT_EQ(pass, 9);  // every gamma2 coverage misses by 0.001
}
