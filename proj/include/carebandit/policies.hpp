#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "carebandit/domain.hpp"
#include "carebandit/error.hpp"
#include "carebandit/features.hpp"
#include "carebandit/ridge.hpp"

namespace carebandit {

enum class PolicyKind { LinUCB, LinTS, Random, Logged, OracleBest };

inline std::string_view to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::LinUCB: return "linucb";
        case PolicyKind::LinTS: return "lints";
        case PolicyKind::Random: return "random";
        case PolicyKind::Logged: return "logged";
        case PolicyKind::OracleBest: return "oracle";
    }
    return "?";
}

inline PolicyKind parse_policy_kind(std::string_view s) {
    if (s == "linucb") return PolicyKind::LinUCB;
    if (s == "lints") return PolicyKind::LinTS;
    if (s == "random") return PolicyKind::Random;
    if (s == "logged") return PolicyKind::Logged;
    if (s == "oracle") return PolicyKind::OracleBest;
    throw ConfigError("unknown policy '" + std::string(s) + "'");
}

inline bool is_learning(PolicyKind k) { return k == PolicyKind::LinUCB || k == PolicyKind::LinTS; }

struct PolicyConfig {
    PolicyKind kind = PolicyKind::LinUCB;
    double exploration = 0.1;  // alpha for LinUCB, v for LinTS
    double lambda = 1.0;
    FeatureVariant variant = FeatureVariant::Interactions;
    std::uint64_t seed = 0;

    void validate() const {
        if (kind == PolicyKind::LinUCB && !(exploration >= 0.0)) throw ConfigError("LinUCB alpha must be >= 0");
        if (kind == PolicyKind::LinTS && !(exploration > 0.0)) throw ConfigError("LinTS v must be > 0");
        if (is_learning(kind) && !(lambda > 0.0)) throw ConfigError("ridge lambda must be > 0");
    }
};

/// Everything a policy may look at when choosing for one patient. Full
/// covariates and reward rows are deliberately absent; only OracleBest reads
/// `best_index`, and only Logged reads `logged_index`.
struct StepContext {
    ObservedCovariates observed{};
    ActionSet actions;
    std::size_t logged_index = 0;
    std::size_t best_index = 0;
};

/// b^T mu + alpha * sqrt(b^T B^{-1} b).
inline double linucb_score(const RidgeState& state, const Eigen::Ref<const Eigen::VectorXd>& b, double alpha) {
    return state.predict(b) + alpha * state.confidence_width(b);
}

class Policy {
public:
    Policy(PolicyConfig config, FeatureSpec spec)
        : config_(config), spec_(std::move(spec)), rng_(config.seed) {
        config_.validate();
        if (is_learning(config_.kind)) {
            if (spec_.variant() != config_.variant) throw ConfigError("feature spec variant does not match policy");
            ridge_.emplace(spec_.dimension(), config_.lambda);
        }
    }

    const PolicyConfig& config() const noexcept { return config_; }
    const FeatureSpec& features() const noexcept { return spec_; }
    const std::optional<RidgeState>& ridge() const noexcept { return ridge_; }

    Eigen::VectorXd context_vector(const ObservedCovariates& x, InterventionMask mask) const {
        return spec_.build(x, mask);
    }

    /// Chosen index into ctx.actions; argmax ties go to the lowest index.
    std::size_t select(const StepContext& ctx) {
        const std::size_t n = ctx.actions.size();
        if (n == 0) throw Error("empty action set");
        switch (config_.kind) {
            case PolicyKind::Logged:
                if (ctx.logged_index >= n) throw Error("logged action outside the action set");
                return ctx.logged_index;
            case PolicyKind::OracleBest:
                return ctx.best_index;
            case PolicyKind::Random: {
                std::uniform_int_distribution<std::size_t> pick(0, n - 1);
                return pick(rng_);
            }
            case PolicyKind::LinUCB:
            case PolicyKind::LinTS:
                break;
        }
        if (n == 1) return 0;

        Eigen::VectorXd coef;
        if (config_.kind == PolicyKind::LinTS) coef = ridge_->sample_coefficients(config_.exploration, rng_);

        Eigen::VectorXd b(spec_.dimension());
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            spec_.build_into(ctx.observed, ctx.actions[i], b);
            const double s = config_.kind == PolicyKind::LinUCB ? linucb_score(*ridge_, b, config_.exploration)
                                                                 : b.dot(coef);
            if (s > best_score) {
                best_score = s;
                best = i;
            }
        }
        return best;
    }

    /// Feeds back the reward of the chosen action; baselines ignore it.
    void update(const Eigen::Ref<const Eigen::VectorXd>& b_chosen, double reward) {
        if (ridge_) ridge_->update(b_chosen, reward);
    }

private:
    PolicyConfig config_;
    FeatureSpec spec_;
    std::mt19937_64 rng_;
    std::optional<RidgeState> ridge_;
};

}  // namespace carebandit
