// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "carebandit/pipeline.hpp"

using namespace carebandit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("carebandit_acceptance_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string fmt(double v) { return text::format_double(v); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome criterion1() {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst_inv = 0.0, worst_mean = 0.0;
    for (int d : {25, 125}) {
        RidgeState state(d, 1.0);
        Eigen::MatrixXd gram = Eigen::MatrixXd::Identity(d, d);
        Eigen::VectorXd f = Eigen::VectorXd::Zero(d);
        for (int t = 1; t <= 10000; ++t) {
            Eigen::VectorXd b(d);
            for (int i = 0; i < d; ++i) b[i] = normal(rng);
            const double r = normal(rng);
            state.update(b, r);
            gram.selfadjointView<Eigen::Lower>().rankUpdate(b);
            f += r * b;
            const Eigen::MatrixXd full = gram.selfadjointView<Eigen::Lower>();
            const auto lu = full.partialPivLu();
            worst_inv = std::max(worst_inv, (state.inverse() - lu.inverse()).cwiseAbs().maxCoeff());
            worst_mean = std::max(worst_mean, (state.mean() - lu.solve(f)).cwiseAbs().maxCoeff());
        }
    }
    const double secs = seconds_since(t0);
    out.require(worst_inv <= 1e-8, "inverse error " + fmt(worst_inv));
    out.require(worst_mean <= 1e-8, "mean error " + fmt(worst_mean));
    out.require(secs < 30.0, "runtime " + fmt(secs) + " s");
    if (out.pass)
        out.detail = "max inverse error " + fmt(worst_inv) + ", max mean error " + fmt(worst_mean) + ", " + fmt(secs) + " s";
    return out;
}

Outcome criterion2() {
    Outcome out;
    RidgeState state(2, 1.0);
    std::mt19937_64 rng(7);
    const int n = 100000;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    std::vector<Eigen::Vector2d> draws;
    draws.reserve(n);
    for (int i = 0; i < n; ++i) {
        draws.emplace_back(state.sample_coefficients(1.0, rng));
        mean += draws.back();
    }
    mean /= n;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& d : draws) cov += (d - mean) * (d - mean).transpose();
    cov /= n - 1;
    const double mean_err = (mean - state.mean()).cwiseAbs().maxCoeff();
    const double cov_err = (cov - state.inverse()).cwiseAbs().maxCoeff();
    out.require(mean_err <= 0.02, "mean error " + fmt(mean_err));
    out.require(cov_err <= 0.02, "covariance error " + fmt(cov_err));
    if (out.pass) out.detail = "mean error " + fmt(mean_err) + ", covariance error " + fmt(cov_err);
    return out;
}

Outcome criterion3() {
    // Contexts and actions come from a synthetic cohort; rewards from its truth.
    // Both learners first absorb one shared warm-up history because a fresh
    // state scores every action exactly 0.
    Outcome out;
    const auto syn = generate_cohort(SynthConfig{});
    const auto table = impute_full_rewards(RewardOracle(syn.truth, 0.26, RewardMode::Probability), syn.cohort);
    std::size_t compared = 0, agreed = 0;
    for (auto variant : {FeatureVariant::MainEffects, FeatureVariant::Interactions}) {
        const auto spec = FeatureSpec::fit(syn.cohort, variant);
        Policy ucb({PolicyKind::LinUCB, 0.0, 1.0, variant, derive_seed(3, 1)}, spec);
        Policy ts({PolicyKind::LinTS, 1e-8, 1.0, variant, derive_seed(3, 2)}, spec);
        std::mt19937_64 rng(derive_seed(3, 0));
        std::uniform_int_distribution<std::size_t> pick(0, syn.cohort.size() - 1);
        for (int t = 0; t < 60; ++t) {
            const auto& p = syn.cohort[pick(rng)];
            const auto b = spec.build(p.observed(), p.logged_mask);
            ucb.update(b, p.outcome);
            ts.update(b, p.outcome);
        }
        for (int t = 0; t < 500; ++t) {
            const std::size_t idx = pick(rng);
            const auto& p = syn.cohort[idx];
            const StepContext ctx{p.observed(), syn.cohort.action_set_for(p), syn.cohort.logged_index(p), table.best[idx]};
            const std::size_t a = ucb.select(ctx), c = ts.select(ctx);
            ++compared;
            agreed += a == c;
            ucb.update(spec.build(ctx.observed, ctx.actions[a]), table.rewards[idx][a]);
            ts.update(spec.build(ctx.observed, ctx.actions[c]), table.rewards[idx][c]);
        }
    }
    out.require(agreed == compared, std::to_string(compared - agreed) + " of " + std::to_string(compared) + " steps differ");
    if (out.pass) out.detail = "identical action indices over " + std::to_string(compared) + " steps (500 per feature variant)";
    return out;
}

Outcome criterion4() {
    Outcome out;
    std::size_t steps = 0;
    for (auto mech : {Mechanism::LinearLogistic, Mechanism::TreeEnsemble})
        for (std::uint64_t cohort_seed : {1u, 42u}) {
            SynthConfig sc;
            sc.seed = cohort_seed;
            sc.mechanism = mech;
            const auto syn = generate_cohort(sc);
            const auto spec = FeatureSpec::fit(syn.cohort, FeatureVariant::MainEffects);
            for (auto mode : {RewardMode::Binary, RewardMode::Probability}) {
                const auto table = impute_full_rewards(RewardOracle(syn.truth, 0.26, mode), syn.cohort);
                for (std::uint64_t seed = 0; seed < 10; ++seed)
                    for (auto sampling : {SamplingMode::WithReplacement, SamplingMode::CohortOrder})
                        for (const auto& row : run_replay(syn.cohort, table, spec, {PolicyKind::OracleBest}, 1000, seed, sampling).rows) {
                            ++steps;
                            if (row.cum_regret != 0.0 || row.inst_regret != 0.0) {
                                out.require(false, "non-zero regret at step " + std::to_string(row.step));
                                return out;
                            }
                        }
            }
        }
    out.detail = "cumulative regret 0 at all " + std::to_string(steps) + " steps";
    return out;
}

Outcome criterion5() {
    Outcome out;
    const ExperimentConfig cfg;
    out.require(default_grid() == std::vector<double>{0.1, 0.3, 0.5}, "default grid");
    out.require(cfg.replay.grid == std::vector<double>{0.1, 0.3, 0.5}, "configured grid");
    out.require(kDefaultReplications == 5 && cfg.replay.replications == 5, "replication count");
    out.require(kDefaultRewardThreshold == 0.26 && cfg.oracle.threshold == 0.26, "reward threshold");
    out.require(cfg.oracle.folds == 5, "fold count");
    out.require(cfg.synth.patients == 278 && cfg.synth.homes == 10 && cfg.synth.adverse_rate == 0.133, "synth defaults");
    const auto syn = generate_cohort(cfg.synth);
    std::set<int> homes;
    bool popcounts_ok = true;
    for (const auto& p : syn.cohort.patients()) {
        homes.insert(p.home_id);
        popcounts_ok = popcounts_ok && p.logged_mask.popcount() >= 1 && p.logged_mask.popcount() <= 16;
    }
    const double rate = static_cast<double>(syn.cohort.adverse_count()) / static_cast<double>(syn.cohort.size());
    out.require(syn.cohort.size() == 278, "cohort size");
    out.require(homes.size() == 10, "home count");
    out.require(rate >= 0.113 && rate <= 0.153, "adverse rate " + fmt(rate));
    out.require(popcounts_ok, "popcount range");
    if (out.pass) out.detail = "grid {0.1,0.3,0.5}, R=5, threshold 0.26, 278 patients / 10 homes, adverse rate " + fmt(rate);
    return out;
}

struct FigureRun {
    fs::path dir;
    ExperimentManifest manifest;
    std::map<std::string, QuantileBand> bands;  // by roster label
};

const FigureRun& figure_run() {
    static const FigureRun run = [] {
        FigureRun r;
        r.dir = scratch("figures");
        ExperimentConfig cfg;
        cfg.seed = 42;
        cfg.oracle.source = OracleSource::Truth;
        std::ostringstream log;
        Pipeline p(cfg, r.dir, false, &log);
        p.run_through(Stage::Report);
        r.manifest = p.manifest();
        for (const auto& e : r.manifest.roster)
            r.bands[e.label] = parse_band_csv(text::read_file((r.dir / r.manifest.find_series(e.series)->band).string()));
        return r;
    }();
    return run;
}

Outcome criterion6() {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    const auto& run = figure_run();
    const auto& b = run.bands;
    auto final_median = [&](const std::string& label) { return b.at(label).rows.back().median; };
    const std::vector<std::string> bandits{"linucb-interactions", "lints-interactions"};
    std::ostringstream detail;

    // (a) ordering of final medians.
    for (const auto& bandit : bandits) {
        out.require(final_median("oracle") < final_median(bandit), "oracle not below " + bandit);
        out.require(final_median(bandit) < final_median("random"), bandit + " not below random");
    }
    detail << "final median regret oracle " << fmt(final_median("oracle")) << ", linucb " << fmt(final_median(bandits[0]))
           << ", lints " << fmt(final_median(bandits[1])) << ", random " << fmt(final_median("random")) << "; ";

    // (b) concave trend: last-quarter per-step regret at most half the first quarter's.
    for (const auto& bandit : bandits) {
        const auto& rows = b.at(bandit).rows;
        const std::size_t T = rows.size(), q = T / 4;
        const double first = rows[q - 1].median / static_cast<double>(q);
        const double last = (rows[T - 1].median - rows[T - 1 - q].median) / static_cast<double>(q);
        out.require(last <= 0.5 * first, bandit + " last-quarter slope " + fmt(last) + " vs first " + fmt(first));
        detail << bandit << " slope " << fmt(first) << " -> " << fmt(last) << "; ";
    }

    // (c) Logged ahead early, overtaken before T.
    const auto& logged = b.at("logged").rows;
    const std::size_t T = logged.size();
    std::size_t ahead_at = 0, behind_at = 0;
    for (std::size_t t = 0; t < T; ++t) {
        bool below = true, above = true;
        for (const auto& bandit : bandits) {
            below = below && logged[t].median < b.at(bandit).rows[t].median;
            above = above && logged[t].median > b.at(bandit).rows[t].median;
        }
        if (!ahead_at && below) ahead_at = t + 1;
        if (ahead_at && !behind_at && above) behind_at = t + 1;
    }
    out.require(ahead_at > 0, "logged never below both bandits");
    out.require(behind_at > 0 && behind_at < T, "no crossover before T");
    detail << "logged below both bandits at step " << ahead_at << ", above both from step " << behind_at;

    const double secs = seconds_since(t0);
    out.require(secs < 300.0, "runtime " + fmt(secs) + " s");
    if (out.pass) out.detail = detail.str() + "; " + fmt(secs) + " s";
    return out;
}

Outcome criterion7() {
    Outcome out;
    const auto& b = figure_run().bands;
    std::ostringstream detail;
    for (const std::string algo : {"linucb", "lints"}) {
        const double inter = b.at(algo + "-interactions").rows.back().median;
        const double main = b.at(algo + "-main").rows.back().median;
        out.require(inter <= main, algo + " interactions " + fmt(inter) + " > main " + fmt(main));
        detail << algo << " interactions " << fmt(inter) << " <= main " << fmt(main) << "; ";
    }
    if (out.pass) out.detail = detail.str();
    return out;
}

Outcome criterion8() {
    Outcome out;
    int boosted_wins = 0;
    std::ostringstream detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ExperimentConfig cfg;
        cfg.seed = seed;
        cfg.synth.mechanism = Mechanism::TreeEnsemble;
        cfg.synth.patients = 1000;
        const fs::path dir = scratch("recovery_" + std::to_string(seed));
        std::ostringstream log;
        Pipeline p(cfg, dir, false, &log);
        p.run_through(Stage::Fit);
        const auto j = nlohmann::json::parse(text::read_file((dir / "oracle.json").string()));
        const auto family = parse_model_family(j.at("selected_config").at("family").get<std::string>());
        const double cv_auc = j.at("cv_auc").get<double>();
        boosted_wins += family == ModelFamily::BoostedTrees;
        out.require(cv_auc > 0.6, "seed " + std::to_string(seed) + " selected cv AUC " + fmt(cv_auc));
        detail << "seed " << seed << ": " << to_string(family) << " (" << fmt(std::round(cv_auc * 1000) / 1000) << ") ";
        fs::remove_all(dir);
    }
    out.require(boosted_wins >= 4, "boosting selected in " + std::to_string(boosted_wins) + " of 5 seeds");
    if (out.pass) out.detail = "boosting selected in " + std::to_string(boosted_wins) + "/5; " + detail.str();
    return out;
}

Outcome criterion9() {
    Outcome out;
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    for (const auto& dir : {a, b}) {
        const std::string cmd = std::string(CAREBANDIT_CLI) + " run --seed 42 --out-dir " + dir.string() + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        out.require(status == 0, "run exited with status " + std::to_string(status));
    }
    if (!out.pass) return out;
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), a);
        const auto ext = rel.extension().string();
        const bool trace = rel.begin()->string() == "traces";
        if (!trace && ext != ".svg") continue;
        ++compared;
        if (!fs::exists(b / rel) || text::read_file(entry.path().string()) != text::read_file((b / rel).string()))
            out.require(false, rel.string() + " differs");
    }
    out.require(compared > 2, "too few files compared");
    if (out.pass) out.detail = std::to_string(compared) + " trace and SVG files byte-identical";
    fs::remove_all(a);
    fs::remove_all(b);
    return out;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"1 ridge inverse and mean match direct solve", criterion1},
        {"2 Thompson draw moments", criterion2},
        {"3 greedy degeneration of LinUCB and LinTS", criterion3},
        {"4 OracleBest zero regret", criterion4},
        {"5 default constants", criterion5},
        {"6 regret curve shape on synthetic truth", criterion6},
        {"7 interactions variant beats main effects", criterion7},
        {"8 reward model selection recovers boosting", criterion8},
        {"9 end-to-end determinism", criterion9},
    };
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << name << ": " << o.detail << std::endl;
    }
    std::cout << (failures ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED") << " (" << 9 - failures << "/9)" << std::endl;
    return failures ? 1 : 0;
}
