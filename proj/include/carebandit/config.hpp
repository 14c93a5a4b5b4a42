#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "carebandit/error.hpp"
#include "carebandit/features.hpp"
#include "carebandit/oracle.hpp"
#include "carebandit/policies.hpp"
#include "carebandit/simulator.hpp"
#include "carebandit/synth.hpp"
#include "carebandit/text.hpp"

namespace carebandit {

inline constexpr std::string_view kToolkitVersion = "carebandit 0.1.0";

enum class OracleSource { Fitted, Truth };

inline std::string_view to_string(OracleSource s) { return s == OracleSource::Fitted ? "fitted" : "truth"; }
inline OracleSource parse_oracle_source(std::string_view s) {
    if (s == "fitted") return OracleSource::Fitted;
    if (s == "truth") return OracleSource::Truth;
    throw ConfigError("unknown oracle source '" + std::string(s) + "'");
}

struct BoostedShape {
    int leaves = 30;
    int depth = 20;
};

struct OracleConfig {
    OracleSource source = OracleSource::Fitted;
    int folds = 5;
    double threshold = kDefaultRewardThreshold;
    RewardMode reward_mode = RewardMode::Binary;
    std::vector<ModelFamily> families = {ModelFamily::LogisticRegression, ModelFamily::BoostedTrees};
    std::vector<ClassWeighting> weightings = {ClassWeighting::Equal, ClassWeighting::UpweightMinority};
    std::vector<double> logistic_l2 = {0.1, 1.0, 10.0};
    int trees = 50;
    std::vector<BoostedShape> boosted_shapes = {{4, 2}, {8, 3}, {30, 20}};
    double learning_rate = 0.1;
    double l1 = 0.1;
    double l2 = 1.0;
    int min_leaf_samples = 5;
    double subsample = 1.0;

    /// The full candidate list in a fixed order: family, then weighting, then
    /// family-specific grid.
    std::vector<RewardModelConfig> candidates(std::uint64_t seed) const {
        std::vector<RewardModelConfig> out;
        for (auto family : families)
            for (auto weighting : weightings) {
                if (family == ModelFamily::LogisticRegression) {
                    for (double l2_value : logistic_l2) {
                        RewardModelConfig c;
                        c.family = family;
                        c.weighting = weighting;
                        c.logistic_l2 = l2_value;
                        out.push_back(c);
                    }
                } else {
                    for (const auto& shape : boosted_shapes) {
                        RewardModelConfig c;
                        c.family = family;
                        c.weighting = weighting;
                        c.boosting = {trees, shape.leaves, shape.depth, learning_rate, l1, l2, min_leaf_samples, subsample, seed};
                        out.push_back(c);
                    }
                }
            }
        for (const auto& c : out) c.validate();
        return out;
    }
};

struct ReplayConfig {
    int horizon = kDefaultHorizon;
    int replications = kDefaultReplications;
    SamplingMode sampling = SamplingMode::WithReplacement;
    std::vector<PolicyKind> algorithms = {PolicyKind::LinUCB, PolicyKind::LinTS};
    std::vector<FeatureVariant> variants = {FeatureVariant::MainEffects, FeatureVariant::Interactions};
    std::vector<double> grid = default_grid();
    double lambda = 1.0;
    std::vector<PolicyKind> baselines = {PolicyKind::Random, PolicyKind::Logged, PolicyKind::OracleBest};
    unsigned threads = 0;
};

struct ExperimentConfig {
    std::uint64_t seed = 42;
    SynthConfig synth{};
    OracleConfig oracle{};
    ReplayConfig replay{};

    std::string synth_text() const;
    std::string oracle_text() const;
    std::string replay_text() const;
    std::string to_text() const {
        return "seed = " + std::to_string(seed) + "\n\n" + synth_text() + "\n" + oracle_text() + "\n" + replay_text();
    }
    void validate() const;
};

namespace detail {

template <typename T, typename F>
std::string join(const std::vector<T>& values, F&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += fmt(values[i]);
    }
    return out;
}

inline std::vector<std::string> split_list(std::string_view value) {
    std::vector<std::string> out;
    for (auto item : text::split(value, ',')) {
        auto t = text::trim(item);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

inline std::string fmt_bool(bool b) { return b ? "true" : "false"; }

}  // namespace detail

inline std::string ExperimentConfig::synth_text() const {
    const auto& s = synth;
    std::string o = "[synth]\n";
    auto put = [&](std::string_view k, const std::string& v) { o += std::string(k) + " = " + v + "\n"; };
    put("patients", std::to_string(s.patients));
    put("homes", std::to_string(s.homes));
    put("min_popcount", std::to_string(s.min_popcount));
    put("max_popcount", std::to_string(s.max_popcount));
    put("popcount_mean", text::format_double(s.popcount_mean));
    put("popcount_sd", text::format_double(s.popcount_sd));
    put("adverse_rate", text::format_double(s.adverse_rate));
    put("mechanism", std::string(to_string(s.mechanism)));
    put("interactions", detail::fmt_bool(s.interactions));
    put("observed_scale", text::format_double(s.observed_scale));
    put("hidden_scale", text::format_double(s.hidden_scale));
    put("mask_scale", text::format_double(s.mask_scale));
    put("interaction_scale", text::format_double(s.interaction_scale));
    put("tree_count", std::to_string(s.tree_count));
    put("tree_depth", std::to_string(s.tree_depth));
    put("tree_scale", text::format_double(s.tree_scale));
    put("nurse_candidates", std::to_string(s.nurse_candidates));
    put("nurse_noise", text::format_double(s.nurse_noise));
    return o;
}

inline std::string ExperimentConfig::oracle_text() const {
    const auto& c = oracle;
    std::string o = "[oracle]\n";
    auto put = [&](std::string_view k, const std::string& v) { o += std::string(k) + " = " + v + "\n"; };
    put("source", std::string(to_string(c.source)));
    put("folds", std::to_string(c.folds));
    put("threshold", text::format_double(c.threshold));
    put("reward_mode", std::string(to_string(c.reward_mode)));
    put("families", detail::join(c.families, [](auto f) { return std::string(to_string(f)); }));
    put("weightings", detail::join(c.weightings, [](auto w) { return std::string(to_string(w)); }));
    put("logistic_l2", detail::join(c.logistic_l2, text::format_double));
    put("trees", std::to_string(c.trees));
    put("boosted_shapes", detail::join(c.boosted_shapes, [](const BoostedShape& s) {
            return std::to_string(s.leaves) + "x" + std::to_string(s.depth);
        }));
    put("learning_rate", text::format_double(c.learning_rate));
    put("l1", text::format_double(c.l1));
    put("l2", text::format_double(c.l2));
    put("min_leaf_samples", std::to_string(c.min_leaf_samples));
    put("subsample", text::format_double(c.subsample));
    return o;
}

inline std::string ExperimentConfig::replay_text() const {
    const auto& r = replay;
    std::string o = "[replay]\n";
    auto put = [&](std::string_view k, const std::string& v) { o += std::string(k) + " = " + v + "\n"; };
    put("horizon", std::to_string(r.horizon));
    put("replications", std::to_string(r.replications));
    put("sampling", std::string(to_string(r.sampling)));
    put("algorithms", detail::join(r.algorithms, [](auto k) { return std::string(to_string(k)); }));
    put("variants", detail::join(r.variants, [](auto v) { return std::string(to_string(v)); }));
    put("grid", detail::join(r.grid, text::format_double));
    put("lambda", text::format_double(r.lambda));
    put("baselines", detail::join(r.baselines, [](auto k) { return std::string(to_string(k)); }));
    put("threads", std::to_string(r.threads));
    return o;
}

inline void ExperimentConfig::validate() const {
    synth.validate();
    if (oracle.folds < 2) throw ConfigError("oracle.folds must be >= 2");
    if (!(oracle.threshold > 0.0 && oracle.threshold < 1.0)) throw ConfigError("oracle.threshold must lie in (0, 1)");
    if (oracle.source == OracleSource::Fitted) {
        if (oracle.families.empty()) throw ConfigError("oracle.families must not be empty");
        if (oracle.weightings.empty()) throw ConfigError("oracle.weightings must not be empty");
        (void)oracle.candidates(seed);
    }
    if (replay.horizon < 1) throw ConfigError("replay.horizon must be >= 1");
    if (replay.replications < 1) throw ConfigError("replay.replications must be >= 1");
    if (!(replay.lambda > 0.0)) throw ConfigError("replay.lambda must be > 0");
    if (!replay.algorithms.empty() && replay.grid.empty()) throw ConfigError("replay.grid must not be empty");
    if (!replay.algorithms.empty() && replay.variants.empty()) throw ConfigError("replay.variants must not be empty");
    for (auto a : replay.algorithms)
        if (!is_learning(a)) throw ConfigError("replay.algorithms accepts only linucb and lints");
    for (auto b : replay.baselines)
        if (is_learning(b)) throw ConfigError("replay.baselines accepts only random, logged and oracle");
    for (double g : replay.grid)
        if (!(g > 0.0)) throw ConfigError("replay.grid values must be > 0");
}

/// Applies one `section.key = value` assignment. Unknown keys throw a
/// ConfigError naming the key.
inline void apply_setting(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                          const std::string& value) {
    const std::string name = section.empty() ? key : section + "." + key;
    auto bad = [&](const std::string& why) { return ConfigError("key '" + name + "': " + why); };
    auto as_int = [&]() {
        auto v = text::parse_int<long long>(value);
        if (!v) throw bad("expected an integer, got '" + value + "'");
        return *v;
    };
    auto as_double = [&]() {
        auto v = text::parse_double(value);
        if (!v) throw bad("expected a number, got '" + value + "'");
        return *v;
    };
    auto as_bool = [&]() {
        if (value == "true") return true;
        if (value == "false") return false;
        throw bad("expected true or false, got '" + value + "'");
    };
    auto as_doubles = [&]() {
        std::vector<double> out;
        for (const auto& item : detail::split_list(value)) {
            auto v = text::parse_double(item);
            if (!v) throw bad("expected numbers, got '" + item + "'");
            out.push_back(*v);
        }
        return out;
    };
    auto as_list = [&](auto parse) {
        std::vector<decltype(parse(std::string_view{}))> out;
        for (const auto& item : detail::split_list(value)) {
            try {
                out.push_back(parse(item));
            } catch (const ConfigError& e) {
                throw bad(e.what());
            }
        }
        return out;
    };
    auto wrap = [&](auto parse) {
        try {
            return parse(value);
        } catch (const ConfigError& e) {
            throw bad(e.what());
        }
    };

    if (section.empty()) {
        if (key == "seed") {
            const auto v = as_int();
            if (v < 0) throw bad("seed must be non-negative");
            cfg.seed = static_cast<std::uint64_t>(v);
            return;
        }
    } else if (section == "synth") {
        auto& s = cfg.synth;
        const std::map<std::string, std::function<void()>> setters = {
            {"patients", [&] { s.patients = static_cast<int>(as_int()); }},
            {"homes", [&] { s.homes = static_cast<int>(as_int()); }},
            {"min_popcount", [&] { s.min_popcount = static_cast<int>(as_int()); }},
            {"max_popcount", [&] { s.max_popcount = static_cast<int>(as_int()); }},
            {"popcount_mean", [&] { s.popcount_mean = as_double(); }},
            {"popcount_sd", [&] { s.popcount_sd = as_double(); }},
            {"adverse_rate", [&] { s.adverse_rate = as_double(); }},
            {"mechanism", [&] { s.mechanism = wrap(parse_mechanism); }},
            {"interactions", [&] { s.interactions = as_bool(); }},
            {"observed_scale", [&] { s.observed_scale = as_double(); }},
            {"hidden_scale", [&] { s.hidden_scale = as_double(); }},
            {"mask_scale", [&] { s.mask_scale = as_double(); }},
            {"interaction_scale", [&] { s.interaction_scale = as_double(); }},
            {"tree_count", [&] { s.tree_count = static_cast<int>(as_int()); }},
            {"tree_depth", [&] { s.tree_depth = static_cast<int>(as_int()); }},
            {"tree_scale", [&] { s.tree_scale = as_double(); }},
            {"nurse_candidates", [&] { s.nurse_candidates = static_cast<int>(as_int()); }},
            {"nurse_noise", [&] { s.nurse_noise = as_double(); }},
        };
        if (auto it = setters.find(key); it != setters.end()) return it->second();
    } else if (section == "oracle") {
        auto& o = cfg.oracle;
        const std::map<std::string, std::function<void()>> setters = {
            {"source", [&] { o.source = wrap(parse_oracle_source); }},
            {"folds", [&] { o.folds = static_cast<int>(as_int()); }},
            {"threshold", [&] { o.threshold = as_double(); }},
            {"reward_mode", [&] { o.reward_mode = wrap(parse_reward_mode); }},
            {"families", [&] { o.families = as_list(parse_model_family); }},
            {"weightings", [&] { o.weightings = as_list(parse_class_weighting); }},
            {"logistic_l2", [&] { o.logistic_l2 = as_doubles(); }},
            {"trees", [&] { o.trees = static_cast<int>(as_int()); }},
            {"boosted_shapes",
             [&] {
                 o.boosted_shapes.clear();
                 for (const auto& item : detail::split_list(value)) {
                     const auto parts = text::split(item, 'x');
                     auto leaves = parts.size() == 2 ? text::parse_int<int>(parts[0]) : std::nullopt;
                     auto depth = parts.size() == 2 ? text::parse_int<int>(parts[1]) : std::nullopt;
                     if (!leaves || !depth) throw bad("expected LEAVESxDEPTH items, got '" + item + "'");
                     o.boosted_shapes.push_back({*leaves, *depth});
                 }
             }},
            {"learning_rate", [&] { o.learning_rate = as_double(); }},
            {"l1", [&] { o.l1 = as_double(); }},
            {"l2", [&] { o.l2 = as_double(); }},
            {"min_leaf_samples", [&] { o.min_leaf_samples = static_cast<int>(as_int()); }},
            {"subsample", [&] { o.subsample = as_double(); }},
        };
        if (auto it = setters.find(key); it != setters.end()) return it->second();
    } else if (section == "replay") {
        auto& r = cfg.replay;
        const std::map<std::string, std::function<void()>> setters = {
            {"horizon", [&] { r.horizon = static_cast<int>(as_int()); }},
            {"replications", [&] { r.replications = static_cast<int>(as_int()); }},
            {"sampling", [&] { r.sampling = wrap(parse_sampling_mode); }},
            {"algorithms", [&] { r.algorithms = as_list(parse_policy_kind); }},
            {"variants", [&] { r.variants = as_list(parse_feature_variant); }},
            {"grid", [&] { r.grid = as_doubles(); }},
            {"lambda", [&] { r.lambda = as_double(); }},
            {"baselines", [&] { r.baselines = as_list(parse_policy_kind); }},
            {"threads",
             [&] {
                 const auto v = as_int();
                 if (v < 0) throw bad("threads must be >= 0");
                 r.threads = static_cast<unsigned>(v);
             }},
        };
        if (auto it = setters.find(key); it != setters.end()) return it->second();
    } else {
        throw ConfigError("unknown section '[" + section + "]'");
    }
    throw ConfigError("unknown key '" + name + "'");
}

/// Parses the line-oriented config format:
///
///     # comment
///     seed = 42
///     [synth]
///     patients = 278
///     [replay]
///     grid = 0.1, 0.3, 0.5
inline ExperimentConfig parse_config(const std::string& content, ExperimentConfig cfg = {}) {
    std::string section;
    std::size_t line_no = 0;
    for (const auto& raw : text::lines(content)) {
        ++line_no;
        auto line = text::trim(raw);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = text::trim(line.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
            section = std::string(text::trim(line.substr(1, line.size() - 2)));
            if (section != "synth" && section != "oracle" && section != "replay")
                throw ConfigError("line " + std::to_string(line_no) + ": unknown section '[" + section + "]'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        apply_setting(cfg, section, std::string(text::trim(line.substr(0, eq))), std::string(text::trim(line.substr(eq + 1))));
    }
    return cfg;
}

/// Applies a `section.key=value` override (or `seed=value`).
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string lhs(text::trim(std::string_view(assignment).substr(0, eq)));
    const std::string value(text::trim(std::string_view(assignment).substr(eq + 1)));
    const auto dot = lhs.find('.');
    if (dot == std::string::npos)
        apply_setting(cfg, "", lhs, value);
    else
        apply_setting(cfg, lhs.substr(0, dot), lhs.substr(dot + 1), value);
}

}  // namespace carebandit
