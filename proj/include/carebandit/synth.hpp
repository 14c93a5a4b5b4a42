#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "carebandit/domain.hpp"
#include "carebandit/error.hpp"
#include "carebandit/models.hpp"
#include "carebandit/text.hpp"

namespace carebandit {

enum class Mechanism { LinearLogistic, TreeEnsemble };

inline std::string_view to_string(Mechanism m) {
    return m == Mechanism::LinearLogistic ? "linear_logistic" : "tree_ensemble";
}

inline Mechanism parse_mechanism(std::string_view s) {
    if (s == "linear_logistic") return Mechanism::LinearLogistic;
    if (s == "tree_ensemble") return Mechanism::TreeEnsemble;
    throw ConfigError("unknown mechanism '" + std::string(s) + "'");
}

struct SynthConfig {
    std::uint64_t seed = 42;
    int patients = 278;
    int homes = 10;
    int min_popcount = kMinInterventions;
    int max_popcount = kMaxInterventions;
    double popcount_mean = 6.0;
    double popcount_sd = 3.0;
    double adverse_rate = 0.133;
    Mechanism mechanism = Mechanism::LinearLogistic;
    bool interactions = true;

    // LinearLogistic coefficient scales (standard deviations of the draws).
    double observed_scale = 0.3;
    double hidden_scale = 0.3;
    double mask_scale = 0.8;
    double interaction_scale = 0.5;

    // TreeEnsemble shape.
    int tree_count = 12;
    int tree_depth = 2;
    double tree_scale = 1.0;

    // The logged mask is the best of `nurse_candidates` random masks under the
    // truth plus N(0, nurse_noise) judgement noise.
    int nurse_candidates = 4;
    double nurse_noise = 1.0;

    void validate() const {
        if (patients < 2) throw ConfigError("synth.patients must be >= 2");
        if (homes < 1) throw ConfigError("synth.homes must be >= 1");
        if (!(adverse_rate > 0.0 && adverse_rate < 1.0)) throw ConfigError("synth.adverse_rate must lie in (0, 1)");
        if (min_popcount < 1 || max_popcount > kInterventionCount || min_popcount > max_popcount)
            throw ConfigError("synth popcount range must satisfy 1 <= min_popcount <= max_popcount <= 20");
        if (max_popcount > kMaxInterventions)
            throw ConfigError("synth.max_popcount must be <= 16 to produce loadable cohorts");
        if (!(popcount_sd > 0.0)) throw ConfigError("synth.popcount_sd must be > 0");
        if (observed_scale < 0 || hidden_scale < 0 || mask_scale < 0 || interaction_scale < 0 || tree_scale < 0)
            throw ConfigError("synth effect scales must be >= 0");
        if (tree_count < 1 || tree_depth < 1) throw ConfigError("synth tree_count and tree_depth must be >= 1");
        if (nurse_candidates < 1) throw ConfigError("synth.nurse_candidates must be >= 1");
        if (nurse_noise < 0) throw ConfigError("synth.nurse_noise must be >= 0");
    }
};

/// The generating reward mechanism. Covariates are z-scored with the stored
/// cohort statistics before entering either mechanism.
struct GroundTruth {
    Mechanism mechanism = Mechanism::LinearLogistic;
    double offset = 0.0;
    FullCovariates covariate_means{};
    FullCovariates covariate_sds{};
    std::vector<double> observed_effects;     // 5
    std::vector<double> hidden_effects;       // 4
    std::vector<double> mask_effects;         // 20
    std::vector<double> interaction_effects;  // 5 x 20, covariate-major
    std::vector<RegressionTree> trees;        // over [z(X) (9) | mask bits (20)]
    double realized_adverse_rate = 0.0;

    /// Logit without the calibration offset.
    double score(const FullCovariates& x, InterventionMask mask) const {
        FullCovariates z{};
        for (int c = 0; c < kFullCovariateCount; ++c) z[c] = (x[c] - covariate_means[c]) / covariate_sds[c];
        if (mechanism == Mechanism::TreeEnsemble) {
            const Eigen::VectorXd row = model_features(z, mask);
            double s = 0.0;
            for (const auto& t : trees) s += t.predict(row);
            return s;
        }
        double s = 0.0;
        for (int c = 0; c < kObservedCovariateCount; ++c) s += observed_effects[c] * z[c];
        for (int c = kObservedCovariateCount; c < kFullCovariateCount; ++c)
            s += hidden_effects[c - kObservedCovariateCount] * z[c];
        for (int k = 0; k < kInterventionCount; ++k) {
            if (!mask.test(k)) continue;
            s += mask_effects[k];
            for (int c = 0; c < kObservedCovariateCount; ++c)
                s += interaction_effects[c * kInterventionCount + k] * z[c];
        }
        return s;
    }

    double probability(const FullCovariates& x, InterventionMask mask) const {
        return sigmoid(offset + score(x, mask));
    }

    std::string serialize() const {
        std::string out = "# carebandit ground-truth descriptor\n";
        auto put = [&](const std::string& key, const std::string& value) { out += key + " = " + value + "\n"; };
        put("mechanism", std::string(to_string(mechanism)));
        put("offset", text::format_double(offset));
        put("realized_adverse_rate", text::format_double(realized_adverse_rate));
        put("covariate_means", text::join_doubles({covariate_means.begin(), covariate_means.end()}));
        put("covariate_sds", text::join_doubles({covariate_sds.begin(), covariate_sds.end()}));
        if (mechanism == Mechanism::LinearLogistic) {
            put("observed_effects", text::join_doubles(observed_effects));
            put("hidden_effects", text::join_doubles(hidden_effects));
            put("mask_effects", text::join_doubles(mask_effects));
            put("interaction_effects", text::join_doubles(interaction_effects));
        } else {
            put("tree_count", std::to_string(trees.size()));
            for (std::size_t i = 0; i < trees.size(); ++i) put("tree." + std::to_string(i), trees[i].serialize());
        }
        // Invented covariate marginals; the generator draws them as follows.
        put("distribution.age", "truncated_normal(mean=82,sd=7,min=65,max=100)");
        put("distribution.gender", "bernoulli(p=0.7)");
        put("distribution.length_of_stay", "round(lognormal(meanlog=6.5,sdlog=0.8)) clamped to [1,7300] days");
        put("distribution.cognition", "uniform_int(0,6)");
        put("distribution.adl_baseline", "uniform_int(0,28)");
        put("distribution.hearing", "uniform_int(0,3)");
        put("distribution.depression", "uniform_int(0,14)");
        put("distribution.pain", "uniform_int(0,3)");
        put("distribution.comorbidity_count", "poisson(3)");
        return out;
    }

    static GroundTruth parse(const std::string& content) {
        std::map<std::string, std::string> kv;
        for (const auto& line : text::lines(content)) {
            const auto t = text::trim(line);
            if (t.empty() || t.front() == '#') continue;
            const auto eq = t.find('=');
            if (eq == std::string_view::npos) throw LoadError("ground-truth line without '=': " + std::string(t));
            kv[std::string(text::trim(t.substr(0, eq)))] = std::string(text::trim(t.substr(eq + 1)));
        }
        auto get = [&](const std::string& key) -> const std::string& {
            auto it = kv.find(key);
            if (it == kv.end()) throw LoadError("ground-truth descriptor missing key '" + key + "'");
            return it->second;
        };
        auto number = [&](const std::string& key) {
            auto v = text::parse_double(get(key));
            if (!v) throw LoadError("ground-truth key '" + key + "' is not a number");
            return *v;
        };
        auto vec = [&](const std::string& key, std::size_t n) {
            auto v = text::parse_doubles(get(key), key);
            if (v.size() != n) throw LoadError("ground-truth key '" + key + "' needs " + std::to_string(n) + " values");
            return v;
        };
        GroundTruth g;
        try {
            g.mechanism = parse_mechanism(get("mechanism"));
        } catch (const ConfigError& e) {
            throw LoadError(e.what());
        }
        g.offset = number("offset");
        g.realized_adverse_rate = number("realized_adverse_rate");
        auto means = vec("covariate_means", kFullCovariateCount);
        auto sds = vec("covariate_sds", kFullCovariateCount);
        std::copy(means.begin(), means.end(), g.covariate_means.begin());
        std::copy(sds.begin(), sds.end(), g.covariate_sds.begin());
        if (g.mechanism == Mechanism::LinearLogistic) {
            g.observed_effects = vec("observed_effects", kObservedCovariateCount);
            g.hidden_effects = vec("hidden_effects", kFullCovariateCount - kObservedCovariateCount);
            g.mask_effects = vec("mask_effects", kInterventionCount);
            g.interaction_effects = vec("interaction_effects", kObservedCovariateCount * kInterventionCount);
        } else {
            auto count = text::parse_int<int>(get("tree_count"));
            if (!count || *count < 1) throw LoadError("ground-truth tree_count invalid");
            for (int i = 0; i < *count; ++i) g.trees.push_back(RegressionTree::parse(get("tree." + std::to_string(i))));
        }
        return g;
    }
};

struct SyntheticCohort {
    CohortDataset cohort;
    GroundTruth truth;
};

namespace detail {

inline InterventionMask random_mask(int popcount, std::mt19937_64& rng) {
    std::array<int, kInterventionCount> idx{};
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates.
    std::uint32_t bits = 0;
    for (int i = 0; i < popcount; ++i) {
        std::uniform_int_distribution<int> pick(i, kInterventionCount - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
        bits |= 1u << idx[static_cast<std::size_t>(i)];
    }
    return InterventionMask(bits);
}

/// Effect-modification tree: covariate splits on every level but the last,
/// then a split on one intervention bit (shared across the tree) whose
/// effect alternates in sign between neighbouring covariate regions. Leaves
/// with the bit off contribute nothing. No additive model can express it.
inline RegressionTree random_tree(int depth, double scale, std::mt19937_64& rng) {
    RegressionTree tree;
    std::uniform_int_distribution<int> covariate(0, kFullCovariateCount - 1);
    std::uniform_int_distribution<int> bit(0, kInterventionCount - 1);
    std::normal_distribution<double> cut(0.0, 0.5);
    std::normal_distribution<double> leaf(0.0, scale);
    const int tree_bit = kFullCovariateCount + bit(rng);
    // Complete binary tree laid out breadth-first.
    const int internal = (1 << depth) - 1;
    const int last_level = (1 << (depth - 1)) - 1;
    const int total = (1 << (depth + 1)) - 1;
    tree.nodes.resize(static_cast<std::size_t>(total));
    for (int i = 0; i < internal; ++i) {
        auto& n = tree.nodes[static_cast<std::size_t>(i)];
        if (i < last_level) {
            n.feature = covariate(rng);
            n.threshold = cut(rng);
        } else {
            n.feature = tree_bit;
            n.threshold = 0.5;
            const double sign = ((i - last_level) % 2 == 0) ? 1.0 : -1.0;
            tree.nodes[static_cast<std::size_t>(2 * i + 2)].value = sign * std::abs(leaf(rng));
        }
        n.left = 2 * i + 1;
        n.right = 2 * i + 2;
    }
    return tree;
}

inline double adverse_rate_at(double offset, const std::vector<double>& scores, const std::vector<double>& uniforms) {
    std::size_t adverse = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!(uniforms[i] < sigmoid(offset + scores[i]))) ++adverse;
    return static_cast<double>(adverse) / static_cast<double>(scores.size());
}

}  // namespace detail

/// Draws a cohort and its ground-truth reward mechanism. The mechanism's
/// offset is calibrated on the realized outcomes so the adverse (ADL loss)
/// rate lands within 2 percentage points of the target.
inline SyntheticCohort generate_cohort(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const auto n = static_cast<std::size_t>(cfg.patients);

    std::normal_distribution<double> age(82.0, 7.0);
    std::bernoulli_distribution female(0.7);
    std::lognormal_distribution<double> stay(6.5, 0.8);
    std::uniform_int_distribution<int> cognition(0, 6), adl(0, 28), hearing(0, 3), depression(0, 14), pain(0, 3);
    std::poisson_distribution<int> comorbidities(3.0);

    std::vector<int> homes(n);
    for (std::size_t i = 0; i < n; ++i) homes[i] = static_cast<int>(i % static_cast<std::size_t>(cfg.homes)) + 1;
    std::shuffle(homes.begin(), homes.end(), rng);

    std::vector<PatientRecord> patients(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = patients[i];
        p.patient_id = static_cast<std::int64_t>(i + 1);
        p.home_id = homes[i];
        double a = age(rng);
        while (a < 65.0 || a > 100.0) a = age(rng);
        p.covariates[0] = std::round(a * 10.0) / 10.0;
        p.covariates[1] = female(rng) ? 1.0 : 0.0;
        p.covariates[2] = std::clamp(std::round(stay(rng)), 1.0, 7300.0);
        p.covariates[3] = cognition(rng);
        p.covariates[4] = adl(rng);
        p.covariates[5] = hearing(rng);
        p.covariates[6] = depression(rng);
        p.covariates[7] = pain(rng);
        p.covariates[8] = comorbidities(rng);
    }

    GroundTruth truth;
    truth.mechanism = cfg.mechanism;
    for (int c = 0; c < kFullCovariateCount; ++c) {
        double mean = 0.0, var = 0.0;
        for (const auto& p : patients) mean += p.covariates[c];
        mean /= static_cast<double>(n);
        for (const auto& p : patients) var += (p.covariates[c] - mean) * (p.covariates[c] - mean);
        var /= static_cast<double>(n - 1);
        truth.covariate_means[c] = mean;
        truth.covariate_sds[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }

    if (cfg.mechanism == Mechanism::LinearLogistic) {
        auto draw = [&](std::size_t count, double sd) {
            std::normal_distribution<double> d(0.0, 1.0);
            std::vector<double> v(count);
            for (auto& x : v) x = sd * d(rng);
            return v;
        };
        truth.observed_effects = draw(kObservedCovariateCount, cfg.observed_scale);
        truth.hidden_effects = draw(kFullCovariateCount - kObservedCovariateCount, cfg.hidden_scale);
        truth.mask_effects = draw(kInterventionCount, cfg.mask_scale);
        truth.interaction_effects = draw(kObservedCovariateCount * kInterventionCount,
                                         cfg.interactions ? cfg.interaction_scale : 0.0);
    } else {
        for (int t = 0; t < cfg.tree_count; ++t) truth.trees.push_back(detail::random_tree(cfg.tree_depth, cfg.tree_scale, rng));
    }

    // Logged masks: the care manager picks the best-looking of a few candidates.
    std::normal_distribution<double> popcount(cfg.popcount_mean, cfg.popcount_sd);
    std::normal_distribution<double> judgement(0.0, 1.0);
    for (auto& p : patients) {
        int k = 0;
        do {
            k = static_cast<int>(std::lround(popcount(rng)));
        } while (k < cfg.min_popcount || k > cfg.max_popcount);
        InterventionMask chosen;
        double chosen_value = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < cfg.nurse_candidates; ++c) {
            const InterventionMask m = detail::random_mask(k, rng);
            const double v = truth.score(p.covariates, m) + cfg.nurse_noise * judgement(rng);
            if (v > chosen_value) {
                chosen_value = v;
                chosen = m;
            }
        }
        p.logged_mask = chosen;
    }

    std::vector<double> scores(n), uniforms(n);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = truth.score(patients[i].covariates, patients[i].logged_mask);
        uniforms[i] = unit(rng);
    }
    // The adverse rate is non-increasing in the offset; bisect for the target.
    double lo = -60.0, hi = 60.0;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        (detail::adverse_rate_at(mid, scores, uniforms) > cfg.adverse_rate ? lo : hi) = mid;
    }
    const double rate_lo = detail::adverse_rate_at(lo, scores, uniforms);
    const double rate_hi = detail::adverse_rate_at(hi, scores, uniforms);
    truth.offset = std::abs(rate_lo - cfg.adverse_rate) < std::abs(rate_hi - cfg.adverse_rate) ? lo : hi;
    truth.realized_adverse_rate = detail::adverse_rate_at(truth.offset, scores, uniforms);
    if (std::abs(truth.realized_adverse_rate - cfg.adverse_rate) > 0.02 + 1e-12)
        throw NumericalError("adverse-rate calibration missed the target: realized " +
                             text::format_double(truth.realized_adverse_rate));

    for (std::size_t i = 0; i < n; ++i)
        patients[i].outcome = uniforms[i] < sigmoid(truth.offset + scores[i]) ? 1 : 0;

    return {CohortDataset(std::move(patients)), std::move(truth)};
}

}  // namespace carebandit
