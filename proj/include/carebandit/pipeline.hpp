#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carebandit/config.hpp"
#include "carebandit/domain.hpp"
#include "carebandit/error.hpp"
#include "carebandit/features.hpp"
#include "carebandit/oracle.hpp"
#include "carebandit/simulator.hpp"
#include "carebandit/svg.hpp"
#include "carebandit/synth.hpp"
#include "carebandit/text.hpp"

namespace carebandit {

namespace fs = std::filesystem;

enum class Stage { Synth = 0, Fit, Impute, Replay, Report };

inline constexpr std::array<std::string_view, 5> kStageNames = {"synth", "fit", "impute", "replay", "report"};

inline std::string_view to_string(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

/// One replayed policy configuration and where its files live (relative to
/// the output directory).
struct SeriesRecord {
    std::string label;
    PolicyKind kind = PolicyKind::Random;
    std::string variant;     // empty for baselines
    double parameter = 0.0;  // alpha or v; 0 for baselines
    bool grid = false;       // part of a hyperparameter sweep
    std::vector<std::string> traces;
    std::string band;

    bool operator==(const SeriesRecord&) const = default;
};

/// A policy shown in the baseline comparison, pointing at its series.
struct RosterEntry {
    std::string label;
    std::string series;

    bool operator==(const RosterEntry&) const = default;
};

struct StageRecord {
    std::string fingerprint;
    std::vector<std::string> outputs;

    bool operator==(const StageRecord&) const = default;
};

struct ExperimentManifest {
    std::string version{kToolkitVersion};
    std::uint64_t seed = 0;
    std::string config;
    std::map<std::string, std::string> files;
    std::map<std::string, StageRecord> stages;
    std::vector<SeriesRecord> series;
    std::vector<RosterEntry> roster;

    bool operator==(const ExperimentManifest&) const = default;

    const SeriesRecord* find_series(const std::string& label) const {
        for (const auto& s : series)
            if (s.label == label) return &s;
        return nullptr;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["version"] = version;
        j["seed"] = seed;
        j["config"] = config;
        j["files"] = files;
        nlohmann::ordered_json stages_json = nlohmann::ordered_json::object();
        for (const auto& [name, rec] : stages) stages_json[name] = {{"fingerprint", rec.fingerprint}, {"outputs", rec.outputs}};
        j["stages"] = stages_json;
        nlohmann::ordered_json series_json = nlohmann::ordered_json::array();
        for (const auto& s : series)
            series_json.push_back({{"label", s.label},
                                   {"policy", to_string(s.kind)},
                                   {"variant", s.variant},
                                   {"parameter", s.parameter},
                                   {"grid", s.grid},
                                   {"traces", s.traces},
                                   {"band", s.band}});
        j["series"] = series_json;
        nlohmann::ordered_json roster_json = nlohmann::ordered_json::array();
        for (const auto& r : roster) roster_json.push_back({{"label", r.label}, {"series", r.series}});
        j["roster"] = roster_json;
        return j;
    }

    std::string dump() const { return to_json().dump(2) + "\n"; }

    static ExperimentManifest from_json(const nlohmann::json& j) {
        ExperimentManifest m;
        try {
            m.version = j.at("version").get<std::string>();
            m.seed = j.at("seed").get<std::uint64_t>();
            m.config = j.at("config").get<std::string>();
            m.files = j.at("files").get<std::map<std::string, std::string>>();
            for (const auto& [name, rec] : j.at("stages").items())
                m.stages[name] = {rec.at("fingerprint").get<std::string>(), rec.at("outputs").get<std::vector<std::string>>()};
            for (const auto& s : j.at("series")) {
                SeriesRecord r;
                r.label = s.at("label").get<std::string>();
                r.kind = parse_policy_kind(s.at("policy").get<std::string>());
                r.variant = s.at("variant").get<std::string>();
                r.parameter = s.at("parameter").get<double>();
                r.grid = s.at("grid").get<bool>();
                r.traces = s.at("traces").get<std::vector<std::string>>();
                r.band = s.at("band").get<std::string>();
                m.series.push_back(std::move(r));
            }
            for (const auto& r : j.at("roster"))
                m.roster.push_back({r.at("label").get<std::string>(), r.at("series").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw LoadError(std::string("malformed manifest: ") + e.what());
        } catch (const ConfigError& e) {
            throw LoadError(std::string("malformed manifest: ") + e.what());
        }
        return m;
    }

    static ExperimentManifest load(const fs::path& path) {
        const std::string content = text::read_file(path.string());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(content);
        } catch (const nlohmann::json::exception& e) {
            throw LoadError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
        }
        return from_json(j);
    }
};

inline std::string series_label(PolicyKind kind, FeatureVariant variant, double parameter) {
    return std::string(to_string(kind)) + "-" + std::string(to_string(variant)) + "-" + text::format_double(parameter);
}
inline std::string roster_label(PolicyKind kind, FeatureVariant variant) {
    return std::string(to_string(kind)) + "-" + std::string(to_string(variant));
}

/// Summary row derived from a series' trace files.
struct SeriesSummary {
    std::string label;
    double final_median_cum_reward = 0.0;
    double final_median_cum_regret = 0.0;
    double final_p25_cum_regret = 0.0;
    double final_p75_cum_regret = 0.0;
};

/// Runs the synth -> fit -> impute -> replay -> report chain inside one
/// output directory. A stage is skipped when the manifest already holds its
/// fingerprint and every output it recorded still exists.
class Pipeline {
public:
    Pipeline(ExperimentConfig config, fs::path out_dir, bool force = false, std::ostream* log = &std::cout)
        : config_(std::move(config)), out_(std::move(out_dir)), force_(force), log_(log) {
        config_.synth.seed = config_.seed;
        config_.validate();
        fs::create_directories(out_);
        const fs::path manifest_path = out_ / "manifest.json";
        if (fs::exists(manifest_path)) {
            try {
                previous_ = ExperimentManifest::load(manifest_path);
            } catch (const LoadError&) {
                previous_.reset();
            }
        }
        manifest_.seed = config_.seed;
        manifest_.config = config_.to_text();
        manifest_.files = {{"cohort", "cohort.csv"},
                           {"ground_truth", "ground_truth.txt"},
                           {"oracle", "oracle.json"},
                           {"reward_table", "reward_table.csv"},
                           {"fig1", "report/fig1_hyperparameters.svg"},
                           {"fig2", "report/fig2_policies.svg"},
                           {"summary", "report/summary.csv"}};
    }

    const ExperimentManifest& manifest() const noexcept { return manifest_; }
    const fs::path& out_dir() const noexcept { return out_; }
    const std::vector<std::string>& executed() const noexcept { return executed_; }
    const std::vector<std::string>& skipped() const noexcept { return skipped_; }

    /// Runs every stage up to and including `last`, in dependency order.
    void run_through(Stage last) {
        std::string upstream = std::string(kToolkitVersion);
        bool upstream_ran = false;
        for (int s = 0; s <= static_cast<int>(last); ++s) {
            const Stage stage = static_cast<Stage>(s);
            const std::string fp = fingerprint(stage, upstream);
            upstream = fp;
            const std::string name(to_string(stage));
            if (!force_ && !upstream_ran && up_to_date(name, fp)) {
                manifest_.stages[name] = previous_->stages.at(name);
                if (stage == Stage::Replay) {
                    manifest_.series = previous_->series;
                    manifest_.roster = previous_->roster;
                }
                skipped_.push_back(name);
                log("[" + name + "] up to date");
            } else {
                try {
                    manifest_.stages[name] = {fp, execute(stage)};
                } catch (const NumericalError& e) {
                    throw NumericalError("stage " + name + ": " + e.what());
                }
                executed_.push_back(name);
                upstream_ran = true;
            }
            write_manifest();
        }
    }

private:
    std::string fingerprint(Stage stage, const std::string& upstream) const {
        std::string material = upstream + "\n" + std::string(to_string(stage)) + "\nseed=" + std::to_string(config_.seed) + "\n";
        switch (stage) {
            case Stage::Synth: material += config_.synth_text(); break;
            case Stage::Fit:
            case Stage::Impute: material += config_.oracle_text(); break;
            case Stage::Replay: material += config_.replay_text(); break;
            case Stage::Report: break;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(text::fnv1a(material)));
        return buf;
    }

    bool up_to_date(const std::string& name, const std::string& fp) const {
        if (!previous_) return false;
        auto it = previous_->stages.find(name);
        if (it == previous_->stages.end() || it->second.fingerprint != fp) return false;
        for (const auto& o : it->second.outputs)
            if (!fs::exists(out_ / o)) return false;
        return true;
    }

    void log(const std::string& line) const {
        if (log_) *log_ << line << "\n";
    }

    fs::path path(const std::string& key) const { return out_ / manifest_.files.at(key); }

    void write(const std::string& rel, const std::string& content) const {
        const fs::path p = out_ / rel;
        fs::create_directories(p.parent_path());
        text::write_file(p.string(), content);
    }

    std::vector<std::string> execute(Stage stage) {
        switch (stage) {
            case Stage::Synth: return run_synth();
            case Stage::Fit: return run_fit();
            case Stage::Impute: return run_impute();
            case Stage::Replay: return run_replay_stage();
            case Stage::Report: return run_report();
        }
        return {};
    }

    std::vector<std::string> run_synth() {
        const SyntheticCohort syn = generate_cohort(config_.synth);
        write(manifest_.files.at("cohort"), cohort_to_csv(syn.cohort));
        write(manifest_.files.at("ground_truth"), syn.truth.serialize());
        log("[synth] " + std::to_string(syn.cohort.size()) + " patients, adverse rate " +
            text::format_double(syn.truth.realized_adverse_rate));
        return {manifest_.files.at("cohort"), manifest_.files.at("ground_truth")};
    }

    std::vector<std::string> run_fit() {
        const CohortDataset cohort = load_cohort(path("cohort").string());
        const auto& oc = config_.oracle;
        nlohmann::ordered_json j;
        std::optional<RewardOracle> oracle;
        if (oc.source == OracleSource::Truth) {
            oracle.emplace(GroundTruth::parse(text::read_file(path("ground_truth").string())), oc.threshold, oc.reward_mode);
            j["source"] = "truth";
            log("[fit] using the generating mechanism as the reward oracle");
        } else {
            const auto candidates = oc.candidates(derive_seed(config_.seed, 0x666974ULL));
            const ModelSelection sel = select_reward_model(cohort, candidates, oc.folds, derive_seed(config_.seed, 0x666f6c64ULL));
            oracle.emplace(fit_reward_model(cohort, sel.best, oc.threshold, oc.reward_mode));
            j["source"] = "fitted";
            nlohmann::ordered_json cands = nlohmann::ordered_json::array();
            for (std::size_t i = 0; i < candidates.size(); ++i)
                cands.push_back({{"model", candidates[i].describe()}, {"cv_auc", sel.candidate_aucs[i]}});
            j["candidates"] = cands;
            j["selected"] = sel.best_index;
            j["selected_config"] = model_config_to_json(sel.best);
            j["cv_auc"] = sel.best_auc;
            log("[fit] selected " + sel.best.describe() + " with cv AUC " + text::format_double(sel.best_auc));
        }
        std::size_t agree = 0;
        for (const auto& p : cohort.patients())
            if ((oracle->probability(p.covariates, p.logged_mask) >= oc.threshold ? 1 : 0) == p.outcome) ++agree;
        j["training_accuracy"] = static_cast<double>(agree) / static_cast<double>(cohort.size());
        j["oracle"] = oracle_to_json(*oracle);
        write(manifest_.files.at("oracle"), j.dump(2) + "\n");
        return {manifest_.files.at("oracle")};
    }

    std::vector<std::string> run_impute() {
        const CohortDataset cohort = load_cohort(path("cohort").string());
        const auto j = nlohmann::json::parse(text::read_file(path("oracle").string()));
        const RewardOracle oracle = oracle_from_json(j.at("oracle"));
        const FullRewardTable table = impute_full_rewards(oracle, cohort);
        write(manifest_.files.at("reward_table"), reward_table_to_csv(table, cohort));
        log("[impute] " + std::to_string(table.size()) + " reward rows (" + std::string(to_string(table.mode)) + ")");
        return {manifest_.files.at("reward_table")};
    }

    SeriesRecord write_series(const std::string& label, PolicyKind kind, std::string variant, double parameter, bool grid,
                              const std::vector<RegretTrace>& traces) {
        SeriesRecord rec{label, kind, std::move(variant), parameter, grid, {}, "bands/" + label + ".csv"};
        for (std::size_t r = 0; r < traces.size(); ++r) {
            const std::string rel = "traces/" + label + "/rep" + std::to_string(r) + ".csv";
            write(rel, trace_to_csv(traces[r]));
            rec.traces.push_back(rel);
        }
        write(rec.band, band_to_csv(aggregate_quantiles(traces)));
        return rec;
    }

    std::vector<std::string> run_replay_stage() {
        const CohortDataset cohort = load_cohort(path("cohort").string());
        const FullRewardTable table = parse_reward_table_csv(text::read_file(path("reward_table").string()), cohort);
        const auto& rc = config_.replay;
        manifest_.series.clear();
        manifest_.roster.clear();
        std::vector<std::string> outputs;

        for (auto kind : rc.algorithms)
            for (auto variant : rc.variants) {
                const FeatureSpec spec = FeatureSpec::fit(cohort, variant);
                PolicyConfig base{kind, rc.grid.front(), rc.lambda, variant, 0};
                const GridResult g = grid_search(cohort, table, spec, base, rc.grid, rc.replications, rc.horizon,
                                                 config_.seed, rc.sampling, rc.threads);
                std::string best_label;
                for (std::size_t i = 0; i < g.grid.size(); ++i) {
                    const std::string label = series_label(kind, variant, g.grid[i]);
                    manifest_.series.push_back(
                        write_series(label, kind, std::string(to_string(variant)), g.grid[i], true, g.traces[i]));
                    if (g.grid[i] == g.best_value) best_label = label;
                }
                manifest_.roster.push_back({roster_label(kind, variant), best_label});
                log("[replay] " + roster_label(kind, variant) + " best parameter " + text::format_double(g.best_value));
            }
        for (auto kind : rc.baselines) {
            const FeatureSpec spec = FeatureSpec::fit(cohort, FeatureVariant::MainEffects);
            PolicyConfig pc{kind, 0.0, rc.lambda, FeatureVariant::MainEffects, 0};
            const auto traces = run_replications(cohort, table, spec, pc, rc.horizon, rc.replications, config_.seed,
                                                 rc.sampling, rc.threads);
            const std::string label(to_string(kind));
            manifest_.series.push_back(write_series(label, kind, "", 0.0, false, traces));
            manifest_.roster.push_back({label, label});
        }
        for (const auto& s : manifest_.series) {
            outputs.insert(outputs.end(), s.traces.begin(), s.traces.end());
            outputs.push_back(s.band);
        }
        log("[replay] " + std::to_string(manifest_.series.size()) + " series x " + std::to_string(rc.replications) +
            " replications, horizon " + std::to_string(rc.horizon));
        return outputs;
    }

    std::vector<std::string> run_report();

    ExperimentConfig config_;
    fs::path out_;
    bool force_;
    std::ostream* log_;
    std::optional<ExperimentManifest> previous_;
    ExperimentManifest manifest_;
    std::vector<std::string> executed_;
    std::vector<std::string> skipped_;

    void write_manifest() const { text::write_file((out_ / "manifest.json").string(), manifest_.dump()); }

    friend struct ReportWriter;
};

/// Rebuilds every reported number from the trace CSVs referenced by a manifest.
struct ReportWriter {
    static std::vector<RegretTrace> load_traces(const fs::path& root, const SeriesRecord& s) {
        std::vector<RegretTrace> traces;
        for (const auto& rel : s.traces) traces.push_back(parse_trace_csv(text::read_file((root / rel).string())));
        if (traces.empty()) throw LoadError("series '" + s.label + "' has no traces");
        return traces;
    }

    static SeriesSummary summarize(const std::string& label, const std::vector<RegretTrace>& traces) {
        const QuantileBand band = aggregate_quantiles(traces);
        std::vector<double> rewards;
        for (const auto& t : traces) rewards.push_back(t.final_cum_reward());
        return {label, median(rewards), band.rows.back().median, band.rows.back().p25, band.rows.back().p75};
    }

    static svg::Series to_svg(const std::string& label, const QuantileBand& band, bool with_band) {
        svg::Series s;
        s.label = label;
        for (const auto& r : band.rows) {
            s.x.push_back(r.step);
            s.y.push_back(r.median);
            if (with_band) {
                s.lower.push_back(r.p25);
                s.upper.push_back(r.p75);
            }
        }
        return s;
    }

    /// Writes both figures and the summary CSV; returns their relative paths.
    static std::vector<std::string> write(const fs::path& root, const ExperimentManifest& m) {
        if (!m.stages.count("replay"))
            throw LoadError("manifest incomplete: stage 'replay' has not run");

        std::map<std::string, std::vector<RegretTrace>> loaded;
        for (const auto& s : m.series) loaded[s.label] = load_traces(root, s);

        // Hyperparameter sweep, one panel per algorithm and feature variant.
        std::vector<svg::Panel> sweep;
        for (const auto& s : m.series) {
            if (!s.grid) continue;
            const std::string title = std::string(to_string(s.kind)) + " (" + s.variant + ")";
            if (sweep.empty() || sweep.back().title != title) sweep.push_back({title, {}});
            const std::string param = s.kind == PolicyKind::LinUCB ? "alpha=" : "v=";
            sweep.back().series.push_back(to_svg(param + text::format_double(s.parameter),
                                                 aggregate_quantiles(loaded.at(s.label)), false));
        }
        const int columns = sweep.size() > 1 ? 2 : 1;
        const std::string fig1 = svg::render("Median cumulative regret by exploration parameter", sweep, columns);

        svg::Panel comparison{"Median cumulative regret with 25-75% band", {}};
        for (const auto& r : m.roster) {
            const SeriesRecord* s = m.find_series(r.series);
            if (!s) throw LoadError("roster entry '" + r.label + "' references a missing series");
            std::string label = r.label;
            if (is_learning(s->kind))
                label += s->kind == PolicyKind::LinUCB ? " (alpha=" : " (v=", label += text::format_double(s->parameter) + ")";
            comparison.series.push_back(to_svg(label, aggregate_quantiles(loaded.at(s->label)), true));
        }
        const std::string fig2 = svg::render("Cumulative regret by policy", {comparison}, 1);

        std::string summary = "series,policy,variant,parameter,selected,final_median_cum_reward,final_median_cum_regret,"
                              "final_p25_cum_regret,final_p75_cum_regret\n";
        for (const auto& s : m.series) {
            const bool selected = std::any_of(m.roster.begin(), m.roster.end(), [&](const RosterEntry& r) { return r.series == s.label; });
            const SeriesSummary sum = summarize(s.label, loaded.at(s.label));
            summary += s.label + "," + std::string(to_string(s.kind)) + "," + s.variant + "," +
                       (is_learning(s.kind) ? text::format_double(s.parameter) : std::string()) + "," +
                       (selected ? "1" : "0") + "," + text::format_double(sum.final_median_cum_reward) + "," +
                       text::format_double(sum.final_median_cum_regret) + "," + text::format_double(sum.final_p25_cum_regret) +
                       "," + text::format_double(sum.final_p75_cum_regret) + "\n";
        }

        const std::vector<std::string> outputs = {m.files.at("fig1"), m.files.at("fig2"), m.files.at("summary")};
        fs::create_directories((root / outputs[0]).parent_path());
        text::write_file((root / outputs[0]).string(), fig1);
        text::write_file((root / outputs[1]).string(), fig2);
        text::write_file((root / outputs[2]).string(), summary);
        return outputs;
    }
};

inline std::vector<std::string> Pipeline::run_report() {
    auto outputs = ReportWriter::write(out_, manifest_);
    log("[report] wrote " + outputs[0] + ", " + outputs[1] + ", " + outputs[2]);
    return outputs;
}

/// Regenerates the report for an existing manifest in place.
inline void report_from_manifest(const fs::path& manifest_path) {
    ExperimentManifest m = ExperimentManifest::load(manifest_path);
    for (std::string_view stage : {"synth", "fit", "impute", "replay"})
        if (!m.stages.count(std::string(stage)))
            throw LoadError("manifest incomplete: stage '" + std::string(stage) + "' has not run");
    const fs::path root = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
    ReportWriter::write(root, m);
}

}  // namespace carebandit
