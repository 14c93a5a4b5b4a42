#include <random>

#include <gtest/gtest.h>

#include "carebandit/features.hpp"
#include "carebandit/synth.hpp"

using namespace carebandit;

namespace {

PatientRecord with_age(std::int64_t id, double age, double los) {
    PatientRecord p;
    p.patient_id = id;
    p.covariates = {age, static_cast<double>(id % 2), los, static_cast<double>(id % 5), static_cast<double>(id % 7), 0, 0, 0, 0};
    p.logged_mask = InterventionMask(1);
    p.outcome = 1;
    return p;
}

FeatureSpec unit_spec(FeatureVariant v) { return FeatureSpec(v, {0, 0, 0, 0, 0}, {1, 1, 1, 1, 1}); }

}  // namespace

TEST(Features, DimensionsAndNames) {
    EXPECT_EQ(feature_dimension(FeatureVariant::MainEffects), 25);
    EXPECT_EQ(feature_dimension(FeatureVariant::Interactions), 125);
    EXPECT_EQ(parse_feature_variant("interactions"), FeatureVariant::Interactions);
    EXPECT_EQ(parse_feature_variant("main"), FeatureVariant::MainEffects);
    EXPECT_THROW(parse_feature_variant("both"), ConfigError);
}

TEST(Features, FitStoresMeanAndSampleSd) {
    std::vector<PatientRecord> ps;
    const double ages[] = {80, 85, 90};
    for (int i = 0; i < 3; ++i) ps.push_back(with_age(i + 1, ages[i], 10.0 + i));
    const auto spec = FeatureSpec::fit(CohortDataset(ps), FeatureVariant::MainEffects);
    EXPECT_DOUBLE_EQ(spec.means()[0], 85.0);
    EXPECT_DOUBLE_EQ(spec.sds()[0], 5.0);
}

TEST(Features, InteractionsSpecReports125) {
    const auto cohort = generate_cohort(SynthConfig{}).cohort;
    EXPECT_EQ(FeatureSpec::fit(cohort, FeatureVariant::Interactions).dimension(), 125);
}

TEST(Features, SinglePatientCohortIsRejected) {
    EXPECT_THROW(FeatureSpec::fit(CohortDataset({with_age(1, 80, 10)}), FeatureVariant::MainEffects), ConfigError);
}

TEST(Features, ConstantColumnIsRejected) {
    std::vector<PatientRecord> ps{with_age(1, 80, 10), with_age(2, 80, 12)};
    EXPECT_THROW(FeatureSpec::fit(CohortDataset(ps), FeatureVariant::MainEffects), ConfigError);
}

TEST(Features, ZeroMaskBitZeroesItsInteractions) {
    const auto spec = FeatureSpec(FeatureVariant::Interactions, {1, 2, 3, 4, 5}, {2, 2, 2, 2, 2});
    const InterventionMask mask(0b10110);
    const auto b = spec.build({9, 8, 7, 6, 5}, mask);
    for (int j = 0; j < kInterventionCount; ++j) {
        if (mask.test(j)) continue;
        for (int c = 0; c < kObservedCovariateCount; ++c) EXPECT_EQ(b[25 + c * kInterventionCount + j], 0.0);
    }
}

TEST(Features, CenteredCovariatesGiveMaskBitsOnly) {
    const auto spec = FeatureSpec(FeatureVariant::MainEffects, {85, 0.5, 300, 3, 14}, {5, 0.5, 100, 2, 7});
    const auto b = spec.build({85, 0.5, 300, 3, 14}, InterventionMask(0b1000000101));
    ASSERT_EQ(b.size(), 25);
    for (int c = 0; c < 5; ++c) EXPECT_EQ(b[c], 0.0);
    EXPECT_EQ(b.tail(20).sum(), 3.0);
    EXPECT_EQ(b[5 + 0], 1.0);
    EXPECT_EQ(b[5 + 2], 1.0);
    EXPECT_EQ(b[5 + 9], 1.0);
}

TEST(Features, InteractionBlockMatchesBruteForceOuterProduct) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 3.0);
    std::uniform_int_distribution<std::uint32_t> bits(1, InterventionMask::kAllBits);
    const auto spec = FeatureSpec(FeatureVariant::Interactions, {1, -1, 2, 0.5, 3}, {2, 0.5, 1.5, 1, 4});
    // All-ones standardized covariates and the full mask give an all-ones block.
    ObservedCovariates ones{};
    for (int c = 0; c < 5; ++c) ones[c] = spec.means()[c] + spec.sds()[c];
    const auto full = spec.build(ones, InterventionMask(InterventionMask::kAllBits));
    for (int i = 25; i < 125; ++i) EXPECT_NEAR(full[i], 1.0, 1e-15);

    for (int trial = 0; trial < 200; ++trial) {
        ObservedCovariates x{};
        for (auto& v : x) v = n(rng);
        const InterventionMask mask(bits(rng));
        const auto b = spec.build(x, mask);
        int pos = 25;
        for (int c = 0; c < 5; ++c) {
            const double z = (x[c] - spec.means()[c]) / spec.sds()[c];
            EXPECT_DOUBLE_EQ(b[c], z);
            for (int k = 0; k < 20; ++k) EXPECT_DOUBLE_EQ(b[pos++], mask.test(k) ? z : 0.0);
        }
        for (int k = 0; k < 20; ++k) EXPECT_EQ(b[5 + k], mask.test(k) ? 1.0 : 0.0);
        EXPECT_EQ(spec.build(x, mask), b);
    }
}

TEST(Features, MainEffectsPrefixOfInteractions) {
    const auto main = unit_spec(FeatureVariant::MainEffects);
    const auto inter = unit_spec(FeatureVariant::Interactions);
    const ObservedCovariates x{0.3, -1, 2, 0, 1};
    const InterventionMask m(0xABC);
    EXPECT_EQ(inter.build(x, m).head(25), main.build(x, m));
}
