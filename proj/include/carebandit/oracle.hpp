#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "carebandit/auc.hpp"
#include "carebandit/domain.hpp"
#include "carebandit/error.hpp"
#include "carebandit/models.hpp"
#include "carebandit/synth.hpp"
#include "carebandit/text.hpp"

namespace carebandit {

enum class ModelFamily { LogisticRegression, BoostedTrees };
enum class ClassWeighting { Equal, UpweightMinority };
enum class RewardMode { Binary, Probability };

inline constexpr double kDefaultRewardThreshold = 0.26;

inline std::string_view to_string(ModelFamily f) {
    return f == ModelFamily::LogisticRegression ? "logistic" : "boosted";
}
inline std::string_view to_string(ClassWeighting w) { return w == ClassWeighting::Equal ? "equal" : "upweight"; }
inline std::string_view to_string(RewardMode m) { return m == RewardMode::Binary ? "binary" : "probability"; }

inline ModelFamily parse_model_family(std::string_view s) {
    if (s == "logistic") return ModelFamily::LogisticRegression;
    if (s == "boosted") return ModelFamily::BoostedTrees;
    throw ConfigError("unknown model family '" + std::string(s) + "'");
}
inline ClassWeighting parse_class_weighting(std::string_view s) {
    if (s == "equal") return ClassWeighting::Equal;
    if (s == "upweight") return ClassWeighting::UpweightMinority;
    throw ConfigError("unknown class weighting '" + std::string(s) + "'");
}
inline RewardMode parse_reward_mode(std::string_view s) {
    if (s == "binary") return RewardMode::Binary;
    if (s == "probability") return RewardMode::Probability;
    throw ConfigError("unknown reward mode '" + std::string(s) + "'");
}

struct RewardModelConfig {
    ModelFamily family = ModelFamily::BoostedTrees;
    ClassWeighting weighting = ClassWeighting::UpweightMinority;
    double logistic_l2 = 1.0;
    BoostingParams boosting{};

    void validate() const {
        if (family == ModelFamily::LogisticRegression) {
            if (!(logistic_l2 > 0.0)) throw ConfigError("logistic L2 penalty must be > 0");
            return;
        }
        const auto& b = boosting;
        if (b.trees < 1) throw ConfigError("boosting tree count must be >= 1");
        if (b.max_leaves < 2) throw ConfigError("boosting max_leaves must be >= 2");
        if (b.max_depth < 1) throw ConfigError("boosting max_depth must be >= 1");
        if (!(b.learning_rate > 0.0 && b.learning_rate <= 1.0)) throw ConfigError("boosting learning_rate must lie in (0, 1]");
        if (b.l1 < 0.0 || b.l2 < 0.0) throw ConfigError("boosting L1/L2 penalties must be >= 0");
        if (b.min_leaf_samples < 1) throw ConfigError("boosting min_leaf_samples must be >= 1");
        if (!(b.subsample > 0.0 && b.subsample <= 1.0)) throw ConfigError("boosting subsample must lie in (0, 1]");
    }

    std::string describe() const {
        std::string s(to_string(family));
        s += '/';
        s += to_string(weighting);
        if (family == ModelFamily::LogisticRegression) return s + "/l2=" + text::format_double(logistic_l2);
        const auto& b = boosting;
        return s + "/trees=" + std::to_string(b.trees) + ",leaves=" + std::to_string(b.max_leaves) +
               ",depth=" + std::to_string(b.max_depth) + ",lr=" + text::format_double(b.learning_rate) +
               ",l1=" + text::format_double(b.l1) + ",l2=" + text::format_double(b.l2);
    }
};

/// A reward model treated as ground truth during replay: maps (X, mask) to
/// a probability of ADL-loss prevention and, in Binary mode, thresholds it.
class RewardOracle {
public:
    using Model = std::variant<LogisticModel, BoostedModel, GroundTruth>;

    RewardOracle(Model model, double threshold = kDefaultRewardThreshold, RewardMode mode = RewardMode::Binary,
                 bool constant = false)
        : model_(std::move(model)), threshold_(threshold), mode_(mode), constant_(constant) {
        if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("reward threshold must lie in (0, 1)");
    }

    double probability(const FullCovariates& x, InterventionMask mask) const {
        return std::visit(
            [&](const auto& m) -> double {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, GroundTruth>)
                    return m.probability(x, mask);
                else
                    return m.probability(model_features(x, mask));
            },
            model_);
    }

    double reward(const FullCovariates& x, InterventionMask mask) const {
        const double p = probability(x, mask);
        return mode_ == RewardMode::Binary ? (p >= threshold_ ? 1.0 : 0.0) : p;
    }

    double threshold() const noexcept { return threshold_; }
    RewardMode mode() const noexcept { return mode_; }
    bool constant() const noexcept { return constant_; }
    const Model& model() const noexcept { return model_; }

    RewardOracle with_mode(RewardMode mode, double threshold) const {
        return RewardOracle(model_, threshold, mode, constant_);
    }

private:
    Model model_;
    double threshold_;
    RewardMode mode_;
    bool constant_;
};

inline TrainingSet training_set_for(const CohortDataset& cohort, std::span<const std::size_t> rows,
                                    ClassWeighting weighting) {
    TrainingSet t = make_training_set(cohort, rows);
    if (weighting == ClassWeighting::UpweightMinority) upweight_minority(t);
    return t;
}

inline RewardOracle fit_on_rows(const CohortDataset& cohort, std::span<const std::size_t> rows,
                                const RewardModelConfig& config, double threshold = kDefaultRewardThreshold,
                                RewardMode mode = RewardMode::Binary) {
    config.validate();
    const TrainingSet t = training_set_for(cohort, rows, config.weighting);
    const auto ones = std::count(t.y.begin(), t.y.end(), 1);
    if (ones == 0 || ones == static_cast<long>(t.size())) throw Error("reward model fit needs both outcome classes");
    if (config.family == ModelFamily::LogisticRegression)
        return RewardOracle(LogisticModel::fit(t, config.logistic_l2), threshold, mode);
    BoostedModel m = BoostedModel::fit(t, config.boosting);
    const bool constant = m.constant;
    return RewardOracle(std::move(m), threshold, mode, constant);
}

/// Fits on every patient's logged (X, mask) -> outcome.
inline RewardOracle fit_reward_model(const CohortDataset& cohort, const RewardModelConfig& config,
                                     double threshold = kDefaultRewardThreshold, RewardMode mode = RewardMode::Binary) {
    std::vector<std::size_t> rows(cohort.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return fit_on_rows(cohort, rows, config, threshold, mode);
}

/// Class-stratified fold assignment: each class is shuffled with the fold
/// seed and dealt round-robin across folds.
inline std::vector<int> stratified_folds(const CohortDataset& cohort, int folds, std::uint64_t seed) {
    if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    std::vector<int> assignment(cohort.size(), -1);
    std::mt19937_64 rng(seed);
    std::size_t class_sizes[2] = {0, 0};
    for (int cls : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < cohort.size(); ++i)
            if (cohort[i].outcome == cls) idx.push_back(i);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t j = 0; j < idx.size(); ++j) assignment[idx[j]] = static_cast<int>(j % static_cast<std::size_t>(folds));
        class_sizes[cls] = idx.size();
    }
    if (class_sizes[0] < static_cast<std::size_t>(folds) || class_sizes[1] < static_cast<std::size_t>(folds))
        throw ConfigError("a class has fewer members than folds (" + std::to_string(folds) +
                          "); use fewer folds");
    return assignment;
}

/// Mean held-out AUC of one candidate across stratified folds.
inline double cross_validated_auc(const CohortDataset& cohort, const RewardModelConfig& config, int folds,
                                  std::uint64_t seed) {
    const auto assignment = stratified_folds(cohort, folds, seed);
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < cohort.size(); ++i) (assignment[i] == f ? test : train).push_back(i);
        const RewardOracle model = fit_on_rows(cohort, train, config);
        std::vector<double> scores;
        std::vector<int> labels;
        for (auto i : test) {
            scores.push_back(model.probability(cohort[i].covariates, cohort[i].logged_mask));
            labels.push_back(cohort[i].outcome);
        }
        total += auc(scores, labels);
    }
    return total / folds;
}

struct ModelSelection {
    RewardModelConfig best;
    double best_auc = 0.0;
    std::size_t best_index = 0;
    std::vector<double> candidate_aucs;
};

/// Highest mean held-out AUC wins; ties keep the earliest candidate.
inline ModelSelection select_reward_model(const CohortDataset& cohort, const std::vector<RewardModelConfig>& candidates,
                                          int folds, std::uint64_t seed) {
    if (candidates.empty()) throw ConfigError("model selection needs at least one candidate");
    ModelSelection sel;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const double a = cross_validated_auc(cohort, candidates[c], folds, seed);
        sel.candidate_aucs.push_back(a);
        if (c == 0 || a > sel.best_auc) {
            sel.best_auc = a;
            sel.best_index = c;
        }
    }
    sel.best = candidates[sel.best_index];
    return sel;
}

// ---------------------------------------------------------------------------
// Full reward table

/// Imputed reward of every candidate action for every patient, row-aligned
/// with the cohort; `best[t]` is the first index attaining the row maximum.
struct FullRewardTable {
    std::vector<std::vector<double>> rewards;
    std::vector<std::size_t> best;
    RewardMode mode = RewardMode::Binary;

    std::size_t size() const noexcept { return rewards.size(); }
};

inline std::size_t first_argmax(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

inline FullRewardTable impute_full_rewards(const RewardOracle& oracle, const CohortDataset& cohort) {
    FullRewardTable table;
    table.mode = oracle.mode();
    table.rewards.reserve(cohort.size());
    for (const auto& p : cohort.patients()) {
        const ActionSet actions = cohort.action_set_for(p);
        std::vector<double> row;
        row.reserve(actions.size());
        for (auto m : actions) row.push_back(oracle.reward(p.covariates, m));
        table.best.push_back(first_argmax(row));
        table.rewards.push_back(std::move(row));
    }
    return table;
}

inline constexpr std::string_view kRewardTableHeader = "patient_id,action_index,mask,reward,is_best";

inline std::string reward_table_to_csv(const FullRewardTable& table, const CohortDataset& cohort) {
    std::string out(kRewardTableHeader);
    out += '\n';
    for (std::size_t t = 0; t < table.size(); ++t) {
        const auto& p = cohort[t];
        const ActionSet actions = cohort.action_set_for(p);
        for (std::size_t i = 0; i < table.rewards[t].size(); ++i) {
            out += std::to_string(p.patient_id) + ',' + std::to_string(i) + ',' + std::to_string(actions[i].bits()) + ',' +
                   text::format_double(table.rewards[t][i]) + ',' + (table.best[t] == i ? "1" : "0") + '\n';
        }
    }
    return out;
}

/// Reads a reward table and checks it against the cohort's action sets.
inline FullRewardTable parse_reward_table_csv(const std::string& content, const CohortDataset& cohort) {
    const auto rows = text::lines(content);
    if (rows.empty() || text::trim(rows[0]) != kRewardTableHeader) throw LoadError("reward table header mismatch");
    FullRewardTable table;
    table.mode = RewardMode::Binary;
    table.rewards.resize(cohort.size());
    table.best.assign(cohort.size(), 0);
    std::size_t patient = 0;
    std::int64_t current_id = -1;
    bool first = true;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (text::trim(rows[r]).empty()) continue;
        const auto cells = text::split(rows[r], ',');
        if (cells.size() != 5) throw LoadError("expected 5 cells", r);
        auto id = text::parse_int<std::int64_t>(cells[0]);
        auto idx = text::parse_int<std::size_t>(cells[1]);
        auto mask = text::parse_int<std::uint32_t>(cells[2]);
        auto reward = text::parse_double(cells[3]);
        auto is_best = text::parse_int<int>(cells[4]);
        if (!id || !idx || !mask || !reward || !is_best) throw LoadError("malformed reward-table row", r);
        if (first || *id != current_id) {
            if (!first) ++patient;
            first = false;
            current_id = *id;
        }
        if (patient >= cohort.size() || cohort[patient].patient_id != *id)
            throw LoadError("reward table rows do not follow cohort order", r, "patient_id");
        const ActionSet actions = cohort.action_set_for(cohort[patient]);
        if (*idx != table.rewards[patient].size() || *idx >= actions.size() || actions[*idx].bits() != *mask)
            throw LoadError("action index/mask disagrees with the cohort action set", r, "mask");
        if (*reward != 0.0 && *reward != 1.0) table.mode = RewardMode::Probability;
        table.rewards[patient].push_back(*reward);
        if (*is_best == 1) table.best[patient] = *idx;
    }
    for (std::size_t t = 0; t < cohort.size(); ++t)
        if (table.rewards[t].size() != cohort.action_set_for(cohort[t]).size())
            throw LoadError("reward table is missing rows for patient " + std::to_string(cohort[t].patient_id));
    return table;
}

// ---------------------------------------------------------------------------
// Oracle persistence

inline nlohmann::json model_config_to_json(const RewardModelConfig& c) {
    return {{"family", to_string(c.family)},
            {"weighting", to_string(c.weighting)},
            {"logistic_l2", c.logistic_l2},
            {"trees", c.boosting.trees},
            {"max_leaves", c.boosting.max_leaves},
            {"max_depth", c.boosting.max_depth},
            {"learning_rate", c.boosting.learning_rate},
            {"l1", c.boosting.l1},
            {"l2", c.boosting.l2},
            {"min_leaf_samples", c.boosting.min_leaf_samples},
            {"subsample", c.boosting.subsample},
            {"seed", c.boosting.seed}};
}

inline RewardModelConfig model_config_from_json(const nlohmann::json& j) {
    RewardModelConfig c;
    c.family = parse_model_family(j.at("family").get<std::string>());
    c.weighting = parse_class_weighting(j.at("weighting").get<std::string>());
    c.logistic_l2 = j.at("logistic_l2").get<double>();
    c.boosting.trees = j.at("trees").get<int>();
    c.boosting.max_leaves = j.at("max_leaves").get<int>();
    c.boosting.max_depth = j.at("max_depth").get<int>();
    c.boosting.learning_rate = j.at("learning_rate").get<double>();
    c.boosting.l1 = j.at("l1").get<double>();
    c.boosting.l2 = j.at("l2").get<double>();
    c.boosting.min_leaf_samples = j.at("min_leaf_samples").get<int>();
    c.boosting.subsample = j.at("subsample").get<double>();
    c.boosting.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline nlohmann::json oracle_to_json(const RewardOracle& oracle) {
    nlohmann::json j;
    j["threshold"] = oracle.threshold();
    j["mode"] = to_string(oracle.mode());
    j["constant"] = oracle.constant();
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, LogisticModel>) {
                j["kind"] = "logistic";
                j["intercept"] = m.intercept;
                j["coef"] = std::vector<double>(m.coef.data(), m.coef.data() + m.coef.size());
                j["means"] = std::vector<double>(m.means.data(), m.means.data() + m.means.size());
                j["scales"] = std::vector<double>(m.scales.data(), m.scales.data() + m.scales.size());
            } else if constexpr (std::is_same_v<M, BoostedModel>) {
                j["kind"] = "boosted";
                j["base_score"] = m.base_score;
                std::vector<std::string> trees;
                for (const auto& t : m.trees) trees.push_back(t.serialize());
                j["trees"] = trees;
            } else {
                j["kind"] = "ground_truth";
                j["descriptor"] = m.serialize();
            }
        },
        oracle.model());
    return j;
}

inline RewardOracle oracle_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    const double threshold = j.at("threshold").get<double>();
    const RewardMode mode = parse_reward_mode(j.at("mode").get<std::string>());
    const bool constant = j.value("constant", false);
    auto to_vec = [](const nlohmann::json& a) {
        auto v = a.get<std::vector<double>>();
        return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    if (kind == "logistic") {
        LogisticModel m;
        m.intercept = j.at("intercept").get<double>();
        m.coef = to_vec(j.at("coef"));
        m.means = to_vec(j.at("means"));
        m.scales = to_vec(j.at("scales"));
        if (m.coef.size() != kModelFeatureCount || m.means.size() != kModelFeatureCount ||
            m.scales.size() != kModelFeatureCount)
            throw LoadError("logistic oracle has the wrong feature count");
        return RewardOracle(std::move(m), threshold, mode, constant);
    }
    if (kind == "boosted") {
        BoostedModel m;
        m.base_score = j.at("base_score").get<double>();
        for (const auto& s : j.at("trees")) m.trees.push_back(RegressionTree::parse(s.get<std::string>()));
        m.constant = constant;
        return RewardOracle(std::move(m), threshold, mode, constant);
    }
    if (kind == "ground_truth") return RewardOracle(GroundTruth::parse(j.at("descriptor").get<std::string>()), threshold, mode);
    throw LoadError("unknown oracle kind '" + kind + "'");
}

}  // namespace carebandit
