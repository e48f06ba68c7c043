#pragma once

// Covariate classification, lag groupings, the grouped-lag regressors of the
// marginal mean, and the enumeration of valid moment conditions.

#include "sgmm/data.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sgmm {

enum class CovariateClass { TypeI, TypeII, TypeIII, TimeInvariant };
enum class Link { Identity, Logit };

class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class LagOutOfRange : public SpecError {
public:
    using SpecError::SpecError;
};

class Underidentified : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string to_string(CovariateClass c) {
    switch (c) {
        case CovariateClass::TypeI: return "I";
        case CovariateClass::TypeII: return "II";
        case CovariateClass::TypeIII: return "III";
        case CovariateClass::TimeInvariant: return "invariant";
    }
    return "?";
}

inline std::string to_string(Link l) { return l == Link::Identity ? "identity" : "logit"; }

/// Partition of (a subset of) the lags 0..T-1 into coefficient blocks.
/// Block 0 is always {0}; later blocks hold consecutive lags in increasing
/// order. Lags not in any block are dropped from the model.
class LagGrouping {
public:
    using Block = std::vector<int>;

    LagGrouping() : blocks_{{0}} {}

    /// Throws SpecError unless the blocks satisfy the grouping invariants.
    explicit LagGrouping(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
        if (blocks_.empty() || blocks_[0] != Block{0})
            throw SpecError("lag grouping must start with the contemporaneous block [0]");
        int prev = 0;
        for (std::size_t g = 1; g < blocks_.size(); ++g) {
            const Block& b = blocks_[g];
            if (b.empty()) throw SpecError("lag grouping contains an empty block");
            for (std::size_t k = 0; k < b.size(); ++k) {
                if (k > 0 && b[k] != b[k - 1] + 1)
                    throw SpecError("lags within a block must be consecutive integers");
            }
            if (b.front() <= prev)
                throw SpecError("lag blocks must be disjoint and appear in increasing lag order");
            prev = b.back();
        }
    }

    /// Contemporaneous coefficient only.
    static LagGrouping aggregated() { return LagGrouping(); }

    /// Lags 0 and 1 with separate coefficients; deeper lags dropped.
    static LagGrouping lag_one_only() { return LagGrouping({{0}, {1}}); }

    /// {0}, {1}, {2..T-1}.
    static LagGrouping first_lag_separate(int T) {
        std::vector<Block> b{{0}};
        if (T >= 2) b.push_back({1});
        if (T >= 3) b.push_back(range(2, T - 1));
        return LagGrouping(std::move(b));
    }

    /// {0}, {1..T-1}.
    static LagGrouping single_lag_block(int T) {
        std::vector<Block> b{{0}};
        if (T >= 2) b.push_back(range(1, T - 1));
        return LagGrouping(std::move(b));
    }

    /// One block per lag: {0}, {1}, ..., {T-1}.
    static LagGrouping fully_partitioned(int T) {
        std::vector<Block> b;
        for (int k = 0; k < T; ++k) b.push_back({k});
        return LagGrouping(std::move(b));
    }

    const std::vector<Block>& blocks() const { return blocks_; }
    int n_blocks() const { return static_cast<int>(blocks_.size()); }
    int max_lag() const { return blocks_.back().back(); }

    bool operator==(const LagGrouping&) const = default;

private:
    static Block range(int lo, int hi) {
        Block b(static_cast<std::size_t>(hi - lo + 1));
        std::iota(b.begin(), b.end(), lo);
        return b;
    }

    std::vector<Block> blocks_;
};

inline std::string block_label(const LagGrouping::Block& b) {
    if (b.size() == 1) return "lag" + std::to_string(b.front());
    return "lag" + std::to_string(b.front()) + "-" + std::to_string(b.back());
}

struct CovariateSpec {
    std::string name;
    CovariateClass cls = CovariateClass::TypeI;
    LagGrouping grouping;

    /// Time-invariant covariates only carry the contemporaneous block.
    const std::vector<LagGrouping::Block>& effective_blocks() const {
        static const std::vector<LagGrouping::Block> contemporaneous{{0}};
        return cls == CovariateClass::TimeInvariant ? contemporaneous : grouping.blocks();
    }
};

struct ModelSpec {
    Link link = Link::Identity;
    bool intercept = true;
    std::vector<CovariateSpec> covariates;

    int n_params() const {
        int p = intercept ? 1 : 0;
        for (const auto& c : covariates) p += static_cast<int>(c.effective_blocks().size());
        return p;
    }

    /// Parameter names in estimation order: intercept, then per covariate its blocks.
    std::vector<std::string> param_names() const {
        std::vector<std::string> names;
        if (intercept) names.emplace_back("(Intercept)");
        for (const auto& c : covariates)
            for (const auto& b : c.effective_blocks()) names.push_back(c.name + ":" + block_label(b));
        return names;
    }

    /// Index of the first parameter belonging to covariate j.
    int first_param(int j) const {
        int r = intercept ? 1 : 0;
        for (int k = 0; k < j; ++k) r += static_cast<int>(covariates[k].effective_blocks().size());
        return r;
    }

    /// Throws LagOutOfRange if a grouped lag cannot be observed in a T-wave panel.
    void check_lags(int T) const {
        if (n_params() < 1) throw SpecError("model has no parameters");
        for (const auto& c : covariates)
            for (const auto& b : c.effective_blocks())
                for (int k : b)
                    if (k >= T)
                        throw LagOutOfRange("covariate '" + c.name + "': lag " + std::to_string(k) +
                                            " is out of range for T=" + std::to_string(T));
    }
};

/// (derivative time s, residual time t), both 1-based.
using TimePair = std::pair<int, int>;

/// Moment validity by covariate type, in (s, t) lexicographic order.
inline std::vector<TimePair> classify_valid_pairs(CovariateClass cls, int T) {
    if (T < 2) throw SpecError("T must be >= 2");
    std::vector<TimePair> pairs;
    for (int s = 1; s <= T; ++s)
        for (int t = 1; t <= T; ++t) {
            bool ok = false;
            switch (cls) {
                case CovariateClass::TypeI:
                case CovariateClass::TimeInvariant: ok = true; break;
                case CovariateClass::TypeII: ok = s <= t; break;
                case CovariateClass::TypeIII: ok = s == t; break;
            }
            if (ok) pairs.emplace_back(s, t);
        }
    return pairs;
}

/// T x T validity matrix, entry (s-1, t-1).
inline Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> validity_matrix(CovariateClass cls, int T) {
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> m =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(T, T, false);
    for (auto [s, t] : classify_valid_pairs(cls, T)) m(s - 1, t - 1) = true;
    return m;
}

/// Block regressor of a lag block at (1-based) time s for one subject's
/// trajectory row: the sum of x(s-k) over lags k in the block with k <= s-1.
template <typename Row>
double block_sum(const Row& x, const LagGrouping::Block& block, int s) {
    double acc = 0.0;
    for (int k : block) {
        if (k > s - 1) break;
        acc += x(s - 1 - k);
    }
    return acc;
}

/// Grouped-lag regressors, one row per (subject, time): row i*T + (t-1)
/// holds the length-p vector multiplying beta in the linear predictor.
struct DesignTensor {
    int n = 0;
    int T = 0;
    Eigen::MatrixXd rows;  // (n*T) x p

    auto row(int i, int t) const { return rows.row(static_cast<Eigen::Index>(i) * T + (t - 1)); }
};

inline DesignTensor expand_design(const LongitudinalDataset& ds, const ModelSpec& spec) {
    const int n = ds.n_subjects();
    const int T = ds.n_times();
    spec.check_lags(T);
    std::vector<int> cov_idx;
    for (const auto& c : spec.covariates) {
        int j = ds.covariate_index(c.name);
        if (j < 0) throw SpecError("covariate '" + c.name + "' not present in dataset");
        cov_idx.push_back(j);
    }
    DesignTensor d{n, T, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * T, spec.n_params())};
    for (int i = 0; i < n; ++i)
        for (int t = 1; t <= T; ++t) {
            auto r = d.rows.row(static_cast<Eigen::Index>(i) * T + (t - 1));
            int col = 0;
            if (spec.intercept) r(col++) = 1.0;
            for (std::size_t c = 0; c < spec.covariates.size(); ++c) {
                auto x = ds.covariates[cov_idx[c]].row(i);
                for (const auto& b : spec.covariates[c].effective_blocks()) r(col++) = block_sum(x, b, t);
            }
        }
    return d;
}

/// One element of the moment vector. The condition for subject i is
///   sum over terms (s, t) of  d_is * (Y_it - mu_it)
/// where d_is is the block regressor at time s (1 for the intercept) times
/// the link derivative factor at s. Stacked systems have a single term per
/// condition.
struct MomentCondition {
    int param = 0;
    int covariate = -1;  // position in ModelSpec::covariates, -1 for the intercept
    int block = 0;
    std::vector<TimePair> terms;

    int s() const { return terms.front().first; }
    int t() const { return terms.front().second; }

    bool operator==(const MomentCondition&) const = default;
};

struct MomentSystem {
    std::vector<MomentCondition> conditions;
    int n_params = 0;
    int n_times = 0;

    int q() const { return static_cast<int>(conditions.size()); }
    int p() const { return n_params; }

    bool operator==(const MomentSystem&) const = default;
};

/// Stacks one condition per (block, s, t) with (s, t) valid for the
/// covariate class and min(block) <= s-1. Intercept conditions come first,
/// one per residual time t. Throws Underidentified when q < p.
inline MomentSystem build_moment_system(int /*n*/, int T, const ModelSpec& spec) {
    spec.check_lags(T);
    MomentSystem sys;
    sys.n_params = spec.n_params();
    sys.n_times = T;
    int param = 0;
    if (spec.intercept) {
        for (int t = 1; t <= T; ++t) sys.conditions.push_back({param, -1, 0, {{t, t}}});
        ++param;
    }
    for (std::size_t c = 0; c < spec.covariates.size(); ++c) {
        const auto& cov = spec.covariates[c];
        const auto pairs = classify_valid_pairs(cov.cls, T);
        const auto& blocks = cov.effective_blocks();
        for (std::size_t g = 0; g < blocks.size(); ++g, ++param) {
            const int min_lag = blocks[g].front();
            for (auto [s, t] : pairs)
                if (min_lag <= s - 1)
                    sys.conditions.push_back({param, static_cast<int>(c), static_cast<int>(g), {{s, t}}});
        }
    }
    if (sys.q() < sys.p())
        throw Underidentified("underidentified: " + std::to_string(sys.q()) + " moment conditions for " +
                              std::to_string(sys.p()) + " parameters");
    return sys;
}

/// Exactly identified system of pooled contemporaneous conditions, one per
/// parameter: sum over t of z_it,r (Y_it - mu_it). These are the
/// least-squares score equations under the identity link.
inline MomentSystem build_score_moment_system(int T, const ModelSpec& spec) {
    spec.check_lags(T);
    MomentSystem sys;
    sys.n_params = spec.n_params();
    sys.n_times = T;
    int param = 0;
    if (spec.intercept) {
        MomentCondition m{param++, -1, 0, {}};
        for (int t = 1; t <= T; ++t) m.terms.emplace_back(t, t);
        sys.conditions.push_back(std::move(m));
    }
    for (std::size_t c = 0; c < spec.covariates.size(); ++c) {
        const auto& blocks = spec.covariates[c].effective_blocks();
        for (std::size_t g = 0; g < blocks.size(); ++g) {
            MomentCondition m{param++, static_cast<int>(c), static_cast<int>(g), {}};
            for (int t = 1; t <= T; ++t)
                if (blocks[g].front() <= t - 1) m.terms.emplace_back(t, t);
            if (m.terms.empty())
                throw Underidentified("underidentified: block " + block_label(blocks[g]) + " of '" + spec.covariates[c].name +
                                      "' is never observed");
            sys.conditions.push_back(std::move(m));
        }
    }
    return sys;
}

}  // namespace sgmm
