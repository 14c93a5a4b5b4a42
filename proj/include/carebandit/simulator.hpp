#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "carebandit/domain.hpp"
#include "carebandit/error.hpp"
#include "carebandit/features.hpp"
#include "carebandit/oracle.hpp"
#include "carebandit/policies.hpp"
#include "carebandit/text.hpp"

namespace carebandit {

enum class SamplingMode { WithReplacement, CohortOrder };

inline std::string_view to_string(SamplingMode m) {
    return m == SamplingMode::WithReplacement ? "with_replacement" : "cohort_order";
}
inline SamplingMode parse_sampling_mode(std::string_view s) {
    if (s == "with_replacement") return SamplingMode::WithReplacement;
    if (s == "cohort_order") return SamplingMode::CohortOrder;
    throw ConfigError("unknown sampling mode '" + std::string(s) + "'");
}

inline const std::vector<double>& default_grid() {
    static const std::vector<double> grid = {0.1, 0.3, 0.5};
    return grid;
}
inline constexpr int kDefaultReplications = 5;
inline constexpr int kDefaultHorizon = 2000;

/// Derives independent stream seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

struct TraceRow {
    int step = 0;
    std::int64_t patient_id = 0;
    std::size_t chosen_index = 0;
    std::size_t best_index = 0;
    double inst_regret = 0.0;
    double cum_regret = 0.0;
    double cum_reward = 0.0;
};

struct RegretTrace {
    std::vector<TraceRow> rows;

    std::size_t horizon() const noexcept { return rows.size(); }
    double final_cum_regret() const { return rows.empty() ? 0.0 : rows.back().cum_regret; }
    double final_cum_reward() const { return rows.empty() ? 0.0 : rows.back().cum_reward; }
};

/// r[a*] - r[chosen].
inline double instantaneous_regret(std::span<const double> row, std::size_t best, std::size_t chosen) {
    if (chosen >= row.size() || best >= row.size()) throw Error("action index outside the reward row");
    return row[best] - row[chosen];
}

/// Replays one policy against the imputed table for `horizon` steps.
///
/// Patients are drawn from a stream seeded by `seed` alone, so every policy
/// run with the same seed sees the same patient sequence. The policy's own
/// randomness uses a separate stream.
inline RegretTrace run_replay(const CohortDataset& cohort, const FullRewardTable& table, const FeatureSpec& spec,
                              PolicyConfig policy_config, int horizon, std::uint64_t seed,
                              SamplingMode mode = SamplingMode::WithReplacement) {
    if (horizon < 1) throw ConfigError("replay horizon must be >= 1");
    if (table.size() != cohort.size()) throw Error("reward table does not match cohort size");
    policy_config.seed = derive_seed(seed, 1);
    Policy policy(policy_config, spec);
    std::mt19937_64 sampler(derive_seed(seed, 0));
    std::uniform_int_distribution<std::size_t> pick(0, cohort.size() - 1);

    RegretTrace trace;
    trace.rows.reserve(static_cast<std::size_t>(horizon));
    double cum_regret = 0.0, cum_reward = 0.0;
    for (int t = 1; t <= horizon; ++t) {
        const std::size_t idx = mode == SamplingMode::WithReplacement
                                    ? pick(sampler)
                                    : static_cast<std::size_t>(t - 1) % cohort.size();
        const PatientRecord& patient = cohort[idx];
        StepContext ctx;
        ctx.observed = patient.observed();
        ctx.actions = cohort.action_set_for(patient);
        ctx.logged_index = cohort.logged_index(patient);
        ctx.best_index = table.best[idx];
        const auto& row = table.rewards[idx];
        try {
            const std::size_t chosen = policy.select(ctx);
            const double reward = row[chosen];
            if (is_learning(policy_config.kind)) policy.update(policy.context_vector(ctx.observed, ctx.actions[chosen]), reward);
            const double regret = instantaneous_regret(row, ctx.best_index, chosen);
            cum_regret += regret;
            cum_reward += reward;
            trace.rows.push_back({t, patient.patient_id, chosen, ctx.best_index, regret, cum_regret, cum_reward});
        } catch (const NumericalError& e) {
            throw NumericalError("replay step " + std::to_string(t) + ": " + e.what());
        }
    }
    return trace;
}

/// Runs independent jobs, possibly concurrently; results come back in job order.
template <typename Result>
std::vector<Result> run_jobs(const std::vector<std::function<Result()>>& jobs, unsigned threads = 0) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<Result> out(jobs.size());
    if (threads <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) out[i] = jobs[i]();
        return out;
    }
    for (std::size_t start = 0; start < jobs.size(); start += threads) {
        std::vector<std::future<Result>> batch;
        const std::size_t end = std::min(jobs.size(), start + threads);
        for (std::size_t i = start; i < end; ++i) batch.push_back(std::async(std::launch::async, jobs[i]));
        for (std::size_t i = start; i < end; ++i) out[i] = batch[i - start].get();
    }
    return out;
}

/// Seed for replication `rep`; shared by every policy so they face identical patient sequences.
inline std::uint64_t replication_seed(std::uint64_t master, int rep) {
    return derive_seed(master, 0x7265706cULL, static_cast<std::uint64_t>(rep));
}

inline std::vector<RegretTrace> run_replications(const CohortDataset& cohort, const FullRewardTable& table,
                                                 const FeatureSpec& spec, const PolicyConfig& policy, int horizon,
                                                 int replications, std::uint64_t master_seed,
                                                 SamplingMode mode = SamplingMode::WithReplacement,
                                                 unsigned threads = 0) {
    if (replications < 1) throw ConfigError("replication count must be >= 1");
    std::vector<std::function<RegretTrace()>> jobs;
    for (int r = 0; r < replications; ++r)
        jobs.emplace_back([&, r] { return run_replay(cohort, table, spec, policy, horizon, replication_seed(master_seed, r), mode); });
    return run_jobs(jobs, threads);
}

/// Linear interpolation between closest ranks of sorted values.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> values) {
    if (values.empty()) throw Error("median of nothing");
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, 0.5);
}

struct QuantileRow {
    int step = 0;
    double p25 = 0.0;
    double median = 0.0;
    double p75 = 0.0;
};

struct QuantileBand {
    std::vector<QuantileRow> rows;
};

/// Per-step 25th/50th/75th percentiles of cumulative regret across replications.
inline QuantileBand aggregate_quantiles(const std::vector<RegretTrace>& traces) {
    if (traces.empty()) throw Error("no traces to aggregate");
    const std::size_t horizon = traces.front().horizon();
    for (const auto& t : traces)
        if (t.horizon() != horizon) throw Error("cannot aggregate traces with different horizons");
    QuantileBand band;
    std::vector<double> values(traces.size());
    for (std::size_t s = 0; s < horizon; ++s) {
        for (std::size_t r = 0; r < traces.size(); ++r) values[r] = traces[r].rows[s].cum_regret;
        std::sort(values.begin(), values.end());
        QuantileRow row{traces.front().rows[s].step, quantile_sorted(values, 0.25), quantile_sorted(values, 0.5),
                        quantile_sorted(values, 0.75)};
        row.median = std::max(row.median, row.p25);
        row.p75 = std::max(row.p75, row.median);
        band.rows.push_back(row);
    }
    return band;
}

struct GridResult {
    double best_value = 0.0;
    std::vector<double> grid;
    std::vector<std::vector<RegretTrace>> traces;  // per grid value
    std::vector<double> median_final_reward;       // per grid value
};

/// Tries each exploration value over R replications; the highest median
/// final cumulative reward wins and ties go to the smaller value.
inline GridResult grid_search(const CohortDataset& cohort, const FullRewardTable& table, const FeatureSpec& spec,
                              PolicyConfig base, const std::vector<double>& grid, int replications, int horizon,
                              std::uint64_t master_seed, SamplingMode mode = SamplingMode::WithReplacement,
                              unsigned threads = 0) {
    if (grid.empty()) throw ConfigError("hyperparameter grid is empty");
    GridResult result;
    result.grid = grid;
    std::vector<std::function<RegretTrace()>> jobs;
    for (double value : grid) {
        PolicyConfig pc = base;
        pc.exploration = value;
        pc.validate();
        for (int r = 0; r < replications; ++r)
            jobs.emplace_back([&, pc, r] {
                return run_replay(cohort, table, spec, pc, horizon, replication_seed(master_seed, r), mode);
            });
    }
    auto all = run_jobs(jobs, threads);
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        std::vector<RegretTrace> traces(std::make_move_iterator(all.begin() + static_cast<long>(g * replications)),
                                        std::make_move_iterator(all.begin() + static_cast<long>((g + 1) * replications)));
        std::vector<double> finals;
        for (const auto& t : traces) finals.push_back(t.final_cum_reward());
        const double med = median(finals);
        result.median_final_reward.push_back(med);
        result.traces.push_back(std::move(traces));
        const double incumbent = result.median_final_reward[best];
        if (g > 0 && (med > incumbent || (med == incumbent && grid[g] < grid[best]))) best = g;
    }
    result.best_value = grid[best];
    return result;
}

inline constexpr std::string_view kTraceHeader = "step,patient_id,chosen_index,best_index,inst_regret,cum_regret,cum_reward";
inline constexpr std::string_view kBandHeader = "step,p25,median,p75";

inline std::string trace_to_csv(const RegretTrace& trace) {
    std::string out(kTraceHeader);
    out += '\n';
    for (const auto& r : trace.rows)
        out += std::to_string(r.step) + ',' + std::to_string(r.patient_id) + ',' + std::to_string(r.chosen_index) + ',' +
               std::to_string(r.best_index) + ',' + text::format_double(r.inst_regret) + ',' +
               text::format_double(r.cum_regret) + ',' + text::format_double(r.cum_reward) + '\n';
    return out;
}

inline RegretTrace parse_trace_csv(const std::string& content) {
    const auto rows = text::lines(content);
    if (rows.empty() || text::trim(rows[0]) != kTraceHeader) throw LoadError("trace header mismatch");
    RegretTrace trace;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (text::trim(rows[i]).empty()) continue;
        const auto c = text::split(rows[i], ',');
        if (c.size() != 7) throw LoadError("expected 7 cells", i);
        auto step = text::parse_int<int>(c[0]);
        auto pid = text::parse_int<std::int64_t>(c[1]);
        auto chosen = text::parse_int<std::size_t>(c[2]);
        auto best = text::parse_int<std::size_t>(c[3]);
        auto inst = text::parse_double(c[4]);
        auto cum = text::parse_double(c[5]);
        auto reward = text::parse_double(c[6]);
        if (!step || !pid || !chosen || !best || !inst || !cum || !reward) throw LoadError("malformed trace row", i);
        trace.rows.push_back({*step, *pid, *chosen, *best, *inst, *cum, *reward});
    }
    return trace;
}

inline std::string band_to_csv(const QuantileBand& band) {
    std::string out(kBandHeader);
    out += '\n';
    for (const auto& r : band.rows)
        out += std::to_string(r.step) + ',' + text::format_double(r.p25) + ',' + text::format_double(r.median) + ',' +
               text::format_double(r.p75) + '\n';
    return out;
}

inline QuantileBand parse_band_csv(const std::string& content) {
    const auto rows = text::lines(content);
    if (rows.empty() || text::trim(rows[0]) != kBandHeader) throw LoadError("band header mismatch");
    QuantileBand band;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (text::trim(rows[i]).empty()) continue;
        const auto c = text::split(rows[i], ',');
        if (c.size() != 4) throw LoadError("expected 4 cells", i);
        auto step = text::parse_int<int>(c[0]);
        auto p25 = text::parse_double(c[1]);
        auto med = text::parse_double(c[2]);
        auto p75 = text::parse_double(c[3]);
        if (!step || !p25 || !med || !p75) throw LoadError("malformed band row", i);
        band.rows.push_back({*step, *p25, *med, *p75});
    }
    return band;
}

}  // namespace carebandit
