#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "carebandit/domain.hpp"
#include "carebandit/error.hpp"

namespace carebandit {

enum class FeatureVariant { MainEffects, Interactions };

inline std::string_view to_string(FeatureVariant v) {
    return v == FeatureVariant::MainEffects ? "main" : "interactions";
}

inline FeatureVariant parse_feature_variant(std::string_view s) {
    if (s == "main" || s == "main_effects") return FeatureVariant::MainEffects;
    if (s == "interactions") return FeatureVariant::Interactions;
    throw ConfigError("unknown feature variant '" + std::string(s) + "'");
}

inline constexpr int feature_dimension(FeatureVariant v) {
    return kObservedCovariateCount + kInterventionCount +
           (v == FeatureVariant::Interactions ? kObservedCovariateCount * kInterventionCount : 0);
}

/// Context-vector layout for the bandit:
///   [z-scored observed covariates (5) | mask bits (20) | z (x) mask, covariate-major (100)]
/// The last block exists only for the Interactions variant. No intercept column.
class FeatureSpec {
public:
    FeatureSpec(FeatureVariant variant, ObservedCovariates means, ObservedCovariates sds)
        : variant_(variant), means_(means), sds_(sds) {
        for (int c = 0; c < kObservedCovariateCount; ++c)
            if (!(sds_[c] > 0.0) || !std::isfinite(sds_[c]) || !std::isfinite(means_[c]))
                throw ConfigError("covariate '" + std::string(kCovariateNames[c]) +
                                  "' has no spread; cannot standardize");
    }

    /// Cohort mean and sample standard deviation of each observed covariate.
    static FeatureSpec fit(const CohortDataset& cohort, FeatureVariant variant) {
        if (cohort.size() < 2) throw ConfigError("feature standardization needs at least two patients");
        ObservedCovariates means{}, sds{};
        const double n = static_cast<double>(cohort.size());
        for (const auto& p : cohort.patients())
            for (int c = 0; c < kObservedCovariateCount; ++c) means[c] += p.covariates[c] / n;
        for (const auto& p : cohort.patients())
            for (int c = 0; c < kObservedCovariateCount; ++c) {
                const double d = p.covariates[c] - means[c];
                sds[c] += d * d;
            }
        for (int c = 0; c < kObservedCovariateCount; ++c) {
            sds[c] = std::sqrt(sds[c] / (n - 1.0));
            if (!(sds[c] > 1e-12)) throw ConfigError("covariate '" + std::string(kCovariateNames[c]) + "' is constant");
        }
        return FeatureSpec(variant, means, sds);
    }

    FeatureVariant variant() const noexcept { return variant_; }
    int dimension() const noexcept { return feature_dimension(variant_); }
    const ObservedCovariates& means() const noexcept { return means_; }
    const ObservedCovariates& sds() const noexcept { return sds_; }

    ObservedCovariates standardize(const ObservedCovariates& x) const noexcept {
        ObservedCovariates z{};
        for (int c = 0; c < kObservedCovariateCount; ++c) z[c] = (x[c] - means_[c]) / sds_[c];
        return z;
    }

    void build_into(const ObservedCovariates& x, InterventionMask mask, Eigen::Ref<Eigen::VectorXd> out) const {
        if (out.size() != dimension()) throw ConfigError("feature buffer has the wrong length");
        const ObservedCovariates z = standardize(x);
        for (int c = 0; c < kObservedCovariateCount; ++c) out[c] = z[c];
        for (int k = 0; k < kInterventionCount; ++k) out[kObservedCovariateCount + k] = mask.test(k) ? 1.0 : 0.0;
        if (variant_ == FeatureVariant::Interactions) {
            int pos = kObservedCovariateCount + kInterventionCount;
            for (int c = 0; c < kObservedCovariateCount; ++c)
                for (int k = 0; k < kInterventionCount; ++k) out[pos++] = mask.test(k) ? z[c] : 0.0;
        }
    }

    Eigen::VectorXd build(const ObservedCovariates& x, InterventionMask mask) const {
        Eigen::VectorXd out(dimension());
        build_into(x, mask, out);
        return out;
    }

private:
    FeatureVariant variant_;
    ObservedCovariates means_;
    ObservedCovariates sds_;
};

}  // namespace carebandit
