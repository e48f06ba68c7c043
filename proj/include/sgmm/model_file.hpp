#pragma once

// Key-value model specification files.
//
//   # comment
//   link = identity            # or logit
//   intercept = true
//   class = I                  # default for covariates below
//   blocks = semi:first-lag-separate
//
//   [bmi]
//   class = II
//   blocks = [[0],[1],[2,3,4]]
//
// `blocks` takes an explicit JSON list of lag lists or a shortcut:
// aggregated, semi:first-lag-separate, semi:single-block, lag1-only, full.
// With no [covariate] sections every covariate in the dataset is used with
// the top-level defaults.

#include "sgmm/data.hpp"
#include "sgmm/design.hpp"

#include "json.hpp"

#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace sgmm {

enum class GroupingShortcut { Aggregated, FirstLagSeparate, SingleLagBlock, LagOneOnly, Full };

/// A grouping that may depend on T until a dataset is known.
class GroupingRule {
public:
    GroupingRule() : rule_(GroupingShortcut::Aggregated) {}
    GroupingRule(GroupingShortcut s) : rule_(s) {}
    GroupingRule(LagGrouping g) : rule_(std::move(g)) {}

    LagGrouping resolve(int T) const {
        if (const auto* g = std::get_if<LagGrouping>(&rule_)) return *g;
        switch (std::get<GroupingShortcut>(rule_)) {
            case GroupingShortcut::Aggregated: return LagGrouping::aggregated();
            case GroupingShortcut::FirstLagSeparate: return LagGrouping::first_lag_separate(T);
            case GroupingShortcut::SingleLagBlock: return LagGrouping::single_lag_block(T);
            case GroupingShortcut::LagOneOnly: return LagGrouping::lag_one_only();
            case GroupingShortcut::Full: return LagGrouping::fully_partitioned(T);
        }
        return LagGrouping::aggregated();
    }

    static GroupingRule parse(const std::string& text) {
        const std::string v(detail::trim(text));
        if (v == "aggregated") return GroupingShortcut::Aggregated;
        if (v == "semi:first-lag-separate" || v == "semi") return GroupingShortcut::FirstLagSeparate;
        if (v == "semi:single-block") return GroupingShortcut::SingleLagBlock;
        if (v == "lag1-only") return GroupingShortcut::LagOneOnly;
        if (v == "full") return GroupingShortcut::Full;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(v);
        } catch (const nlohmann::json::parse_error&) {
            throw SpecError("cannot parse blocks '" + v + "'");
        }
        if (!j.is_array()) throw SpecError("blocks must be a list of lag lists");
        std::vector<LagGrouping::Block> blocks;
        for (const auto& b : j) {
            if (!b.is_array()) throw SpecError("blocks must be a list of lag lists");
            LagGrouping::Block block;
            for (const auto& k : b) {
                if (!k.is_number_integer() || k.get<int>() < 0) throw SpecError("lags must be non-negative integers");
                block.push_back(k.get<int>());
            }
            blocks.push_back(std::move(block));
        }
        return LagGrouping(std::move(blocks));
    }

private:
    std::variant<GroupingShortcut, LagGrouping> rule_;
};

inline CovariateClass parse_covariate_class(const std::string& text) {
    const std::string v(detail::trim(text));
    if (v == "I" || v == "1" || v == "TypeI") return CovariateClass::TypeI;
    if (v == "II" || v == "2" || v == "TypeII") return CovariateClass::TypeII;
    if (v == "III" || v == "3" || v == "TypeIII") return CovariateClass::TypeIII;
    if (v == "invariant" || v == "TimeInvariant") return CovariateClass::TimeInvariant;
    throw SpecError("unknown covariate class '" + v + "' (expected I, II, III or invariant)");
}

struct ModelTemplate {
    struct Covariate {
        std::string name;
        std::optional<CovariateClass> cls;
        std::optional<GroupingRule> blocks;
    };

    Link link = Link::Identity;
    bool intercept = true;
    CovariateClass default_class = CovariateClass::TypeI;
    GroupingRule default_blocks = GroupingShortcut::FirstLagSeparate;
    std::vector<Covariate> covariates;

    /// Concrete model for a dataset; shortcuts are resolved with its T.
    ModelSpec instantiate(const LongitudinalDataset& ds) const {
        ModelSpec spec;
        spec.link = link;
        spec.intercept = intercept;
        const int T = ds.n_times();
        if (covariates.empty()) {
            for (const auto& name : ds.covariate_names)
                spec.covariates.push_back({name, default_class, default_blocks.resolve(T)});
        } else {
            for (const auto& c : covariates) {
                if (ds.covariate_index(c.name) < 0) throw SpecError("covariate '" + c.name + "' not in dataset");
                spec.covariates.push_back(
                    {c.name, c.cls.value_or(default_class), c.blocks.value_or(default_blocks).resolve(T)});
            }
        }
        spec.check_lags(T);
        return spec;
    }
};

inline ModelTemplate parse_model_spec(std::istream& in) {
    ModelTemplate m;
    std::string line;
    int line_no = 0;
    std::optional<std::size_t> section;
    auto fail = [&](const std::string& msg) { throw SpecError("model spec line " + std::to_string(line_no) + ": " + msg); };
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string_view body = detail::trim(line);
        if (body.empty()) continue;
        if (body.front() == '[' && body.back() == ']' && body.find('=') == std::string_view::npos) {
            std::string_view name = detail::trim(body.substr(1, body.size() - 2));
            if (name.rfind("covariate ", 0) == 0) name = detail::trim(name.substr(10));
            if (name.empty()) fail("empty covariate section name");
            m.covariates.push_back({std::string(name), std::nullopt, std::nullopt});
            section = m.covariates.size() - 1;
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) fail("expected 'key = value'");
        const std::string key(detail::trim(body.substr(0, eq)));
        const std::string value(detail::trim(body.substr(eq + 1)));
        ModelTemplate::Covariate* current = section ? &m.covariates[*section] : nullptr;
        try {
            if (key == "class") {
                if (current) current->cls = parse_covariate_class(value);
                else m.default_class = parse_covariate_class(value);
            } else if (key == "blocks") {
                if (current) current->blocks = GroupingRule::parse(value);
                else m.default_blocks = GroupingRule::parse(value);
            } else if (current) {
                fail("unknown covariate key '" + key + "'");
            } else if (key == "link") {
                if (value == "identity") m.link = Link::Identity;
                else if (value == "logit") m.link = Link::Logit;
                else fail("link must be identity or logit");
            } else if (key == "intercept") {
                if (value == "true" || value == "yes" || value == "1") m.intercept = true;
                else if (value == "false" || value == "no" || value == "0") m.intercept = false;
                else fail("intercept must be true or false");
            } else {
                fail("unknown key '" + key + "'");
            }
        } catch (const SpecError& e) {
            const std::string what = e.what();
            if (what.rfind("model spec line", 0) == 0) throw;
            fail(what);
        }
    }
    return m;
}

inline ModelTemplate parse_model_spec_string(const std::string& text) {
    std::istringstream in(text);
    return parse_model_spec(in);
}

}  // namespace sgmm
