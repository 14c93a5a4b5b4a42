#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carebandit/error.hpp"
#include "carebandit/text.hpp"

namespace carebandit {

inline constexpr int kInterventionCount = 20;
inline constexpr int kMinInterventions = 1;
inline constexpr int kMaxInterventions = 16;
inline constexpr int kFullCovariateCount = 9;
inline constexpr int kObservedCovariateCount = 5;

/// Which of the 20 interventions were applied; bit k is intervention k+1.
class InterventionMask {
public:
    static constexpr std::uint32_t kAllBits = (1u << kInterventionCount) - 1u;

    constexpr InterventionMask() = default;
    constexpr explicit InterventionMask(std::uint32_t bits) : bits_(bits) {}

    constexpr std::uint32_t bits() const noexcept { return bits_; }
    constexpr int popcount() const noexcept { return std::popcount(bits_); }
    constexpr bool test(int k) const noexcept { return (bits_ >> k) & 1u; }
    constexpr bool in_range() const noexcept { return (bits_ & ~kAllBits) == 0; }
    constexpr bool valid() const noexcept {
        return in_range() && popcount() >= kMinInterventions && popcount() <= kMaxInterventions;
    }

    constexpr auto operator<=>(const InterventionMask&) const = default;

private:
    std::uint32_t bits_ = 0;
};

using ObservedCovariates = std::array<double, kObservedCovariateCount>;
using FullCovariates = std::array<double, kFullCovariateCount>;

/// Column names of the full covariate vector X, in storage order. The first
/// five form the observed subset available to the bandit.
inline constexpr std::array<std::string_view, kFullCovariateCount> kCovariateNames = {
    "age", "gender", "length_of_stay", "cognition", "adl_baseline",
    "hearing", "depression", "pain", "comorbidity_count"};

struct PatientRecord {
    std::int64_t patient_id = 0;
    int home_id = 1;
    FullCovariates covariates{};
    InterventionMask logged_mask;
    int outcome = 0;  // 1 = ADL loss prevented

    double age() const noexcept { return covariates[0]; }
    double gender() const noexcept { return covariates[1]; }
    double length_of_stay() const noexcept { return covariates[2]; }
    double cognition() const noexcept { return covariates[3]; }
    double adl_baseline() const noexcept { return covariates[4]; }

    /// The subset visible to the learning agent, always derived from X.
    ObservedCovariates observed() const noexcept {
        ObservedCovariates out{};
        std::copy_n(covariates.begin(), kObservedCovariateCount, out.begin());
        return out;
    }
};

/// The candidate masks for one step, in ascending mask order.
using ActionSet = std::span<const InterventionMask>;

inline constexpr std::string_view kCohortHeader =
    "patient_id,home_id,age,gender,length_of_stay,cognition,adl_baseline,hearing,depression,pain,"
    "comorbidity_count,intervention_mask,outcome";

/// Validated, immutable patient cohort with its per-cardinality action index.
class CohortDataset {
public:
    CohortDataset() = default;

    explicit CohortDataset(std::vector<PatientRecord> patients) : patients_(std::move(patients)) {
        for (std::size_t i = 0; i < patients_.size(); ++i) validate(patients_[i], i + 1);
        for (const auto& p : patients_) buckets_[p.logged_mask.popcount()].push_back(p.logged_mask);
        for (auto& [k, masks] : buckets_) {
            std::sort(masks.begin(), masks.end());
            masks.erase(std::unique(masks.begin(), masks.end()), masks.end());
        }
    }

    std::size_t size() const noexcept { return patients_.size(); }
    bool empty() const noexcept { return patients_.empty(); }
    const std::vector<PatientRecord>& patients() const noexcept { return patients_; }
    const PatientRecord& operator[](std::size_t i) const { return patients_.at(i); }
    const std::map<int, std::vector<InterventionMask>>& buckets() const noexcept { return buckets_; }

    /// All realized masks sharing the patient's logged cardinality.
    ActionSet action_set_for(const PatientRecord& patient) const {
        auto it = buckets_.find(patient.logged_mask.popcount());
        if (it == buckets_.end()) throw Error("no action bucket for popcount " +
                                              std::to_string(patient.logged_mask.popcount()));
        return it->second;
    }

    /// Index of the patient's logged mask inside its action set.
    std::size_t logged_index(const PatientRecord& patient) const {
        const ActionSet actions = action_set_for(patient);
        auto it = std::lower_bound(actions.begin(), actions.end(), patient.logged_mask);
        if (it == actions.end() || *it != patient.logged_mask)
            throw Error("logged mask of patient " + std::to_string(patient.patient_id) + " missing from its action set");
        return static_cast<std::size_t>(it - actions.begin());
    }

    std::size_t adverse_count() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(patients_.begin(), patients_.end(), [](const auto& p) { return p.outcome == 0; }));
    }

    static void validate(const PatientRecord& p, std::size_t row) {
        for (int c = 0; c < kFullCovariateCount; ++c)
            if (!std::isfinite(p.covariates[c]))
                throw LoadError("non-finite covariate", row, std::string(kCovariateNames[c]));
        if (p.home_id < 1) throw LoadError("home id must be >= 1", row, "home_id");
        if (p.gender() != 0.0 && p.gender() != 1.0) throw LoadError("gender must be 0 or 1", row, "gender");
        if (p.length_of_stay() < 0.0) throw LoadError("length of stay must be >= 0", row, "length_of_stay");
        if (p.covariates[8] < 0.0) throw LoadError("comorbidity count must be >= 0", row, "comorbidity_count");
        if (!p.logged_mask.in_range())
            throw LoadError("mask exceeds 20 bits", row, "intervention_mask");
        if (!p.logged_mask.valid())
            throw LoadError("mask popcount " + std::to_string(p.logged_mask.popcount()) + " outside [1, 16]", row,
                            "intervention_mask");
        if (p.outcome != 0 && p.outcome != 1) throw LoadError("outcome must be 0 or 1", row, "outcome");
    }

private:
    std::vector<PatientRecord> patients_;
    std::map<int, std::vector<InterventionMask>> buckets_;
};

inline std::string cohort_to_csv(const CohortDataset& cohort) {
    std::string out(kCohortHeader);
    out += '\n';
    for (const auto& p : cohort.patients()) {
        out += std::to_string(p.patient_id);
        out += ',';
        out += std::to_string(p.home_id);
        for (double c : p.covariates) {
            out += ',';
            out += text::format_double(c);
        }
        out += ',';
        out += std::to_string(p.logged_mask.bits());
        out += ',';
        out += std::to_string(p.outcome);
        out += '\n';
    }
    return out;
}

/// Parses cohort CSV content. Row numbers in errors count data rows from 1.
inline CohortDataset parse_cohort_csv(const std::string& content) {
    const auto rows = text::lines(content);
    if (rows.empty()) throw LoadError("empty cohort file");

    const auto header = text::split(rows[0], ',');
    const auto expected = text::split(kCohortHeader, ',');
    std::vector<int> column_of(expected.size(), -1);
    for (std::size_t h = 0; h < header.size(); ++h) {
        const auto name = text::trim(header[h]);
        for (std::size_t e = 0; e < expected.size(); ++e)
            if (expected[e] == name) column_of[e] = static_cast<int>(h);
    }
    for (std::size_t e = 0; e < expected.size(); ++e)
        if (column_of[e] < 0) throw LoadError("missing column", 0, std::string(expected[e]));

    std::vector<PatientRecord> patients;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (text::trim(rows[r]).empty()) continue;
        const auto cells = text::split(rows[r], ',');
        if (cells.size() != header.size())
            throw LoadError("expected " + std::to_string(header.size()) + " cells, found " +
                                std::to_string(cells.size()),
                            r);
        auto cell = [&](std::size_t e) { return cells[static_cast<std::size_t>(column_of[e])]; };
        auto integer = [&](std::size_t e) {
            auto v = text::parse_int<std::int64_t>(cell(e));
            if (!v) throw LoadError("non-integer value '" + std::string(cell(e)) + "'", r, std::string(expected[e]));
            return *v;
        };
        PatientRecord p;
        p.patient_id = integer(0);
        p.home_id = static_cast<int>(integer(1));
        for (int c = 0; c < kFullCovariateCount; ++c) {
            auto v = text::parse_double(cell(2 + c));
            if (!v)
                throw LoadError("non-numeric value '" + std::string(cell(2 + c)) + "'", r,
                                std::string(expected[2 + c]));
            p.covariates[c] = *v;
        }
        const auto mask = integer(11);
        if (mask < 0 || mask > static_cast<std::int64_t>(InterventionMask::kAllBits))
            throw LoadError("mask out of 20-bit range", r, "intervention_mask");
        p.logged_mask = InterventionMask(static_cast<std::uint32_t>(mask));
        p.outcome = static_cast<int>(integer(12));
        CohortDataset::validate(p, r);
        patients.push_back(p);
    }
    return CohortDataset(std::move(patients));
}

inline CohortDataset load_cohort(const std::string& path) { return parse_cohort_csv(text::read_file(path)); }

inline void save_cohort(const CohortDataset& cohort, const std::string& path) {
    text::write_file(path, cohort_to_csv(cohort));
}

}  // namespace carebandit
