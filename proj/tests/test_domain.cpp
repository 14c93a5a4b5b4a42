#include <filesystem>
#include <map>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "carebandit/domain.hpp"
#include "carebandit/synth.hpp"

using namespace carebandit;

namespace {

PatientRecord make_patient(std::int64_t id, std::uint32_t mask, int outcome = 1) {
    PatientRecord p;
    p.patient_id = id;
    p.home_id = 1 + static_cast<int>(id % 3);
    p.covariates = {80.0 + static_cast<double>(id), static_cast<double>(id % 2), 100.0 + static_cast<double>(id), 3, 10, 1, 4, 1, 2};
    p.logged_mask = InterventionMask(mask);
    p.outcome = outcome;
    return p;
}

std::string header() { return std::string(kCohortHeader) + "\n"; }

}  // namespace

TEST(Mask, PopcountAndBits) {
    InterventionMask m(0b1011);
    EXPECT_EQ(m.popcount(), 3);
    EXPECT_TRUE(m.test(0));
    EXPECT_FALSE(m.test(2));
    EXPECT_TRUE(m.valid());
    EXPECT_FALSE(InterventionMask(0).valid());
    EXPECT_FALSE(InterventionMask(1u << 20).in_range());
    EXPECT_FALSE(InterventionMask(0x1FFFF).valid());  // 17 interventions
    EXPECT_TRUE(InterventionMask(0xFFFF).valid());    // 16 interventions
}

TEST(Patient, ObservedIsPrefixOfFull) {
    const auto p = make_patient(5, 0b11);
    const auto x = p.observed();
    for (int c = 0; c < kObservedCovariateCount; ++c) EXPECT_EQ(x[c], p.covariates[c]);
}

TEST(Cohort, SyntheticFileLoads) {
    const auto syn = generate_cohort(SynthConfig{});
    const CohortDataset cohort = parse_cohort_csv(cohort_to_csv(syn.cohort));
    EXPECT_EQ(cohort.size(), 278u);
    for (const auto& [k, masks] : cohort.buckets()) {
        EXPECT_GE(k, 1);
        EXPECT_LE(k, 16);
    }
}

TEST(Cohort, ZeroPopcountRowIsNamed) {
    std::string csv = header();
    csv += "1,1,80,0,100,3,10,1,4,1,2,5,1\n";
    csv += "2,1,81,1,100,3,10,1,4,1,2,0,1\n";
    try {
        parse_cohort_csv(csv);
        FAIL() << "expected a load error";
    } catch (const LoadError& e) {
        EXPECT_EQ(e.row(), 2u);
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
    }
}

TEST(Cohort, NonNumericCellNamesRowAndColumn) {
    std::string csv = header();
    csv += "1,1,eighty,0,100,3,10,1,4,1,2,5,1\n";
    try {
        parse_cohort_csv(csv);
        FAIL() << "expected a load error";
    } catch (const LoadError& e) {
        EXPECT_EQ(e.row(), 1u);
        EXPECT_EQ(e.column(), "age");
    }
}

TEST(Cohort, MissingColumnAndOversizedMask) {
    EXPECT_THROW(parse_cohort_csv("patient_id,home_id\n1,1\n"), LoadError);
    std::string csv = header();
    csv += "1,1,80,0,100,3,10,1,4,1,2,1048576,1\n";
    EXPECT_THROW(parse_cohort_csv(csv), LoadError);
    std::string bad_outcome = header();
    bad_outcome += "1,1,80,0,100,3,10,1,4,1,2,3,2\n";
    EXPECT_THROW(parse_cohort_csv(bad_outcome), LoadError);
}

TEST(Cohort, BucketsDeduplicate) {
    const CohortDataset cohort({make_patient(1, 0b111), make_patient(2, 0b111), make_patient(3, 0b1)});
    ASSERT_EQ(cohort.buckets().at(3).size(), 1u);
    EXPECT_EQ(cohort.buckets().at(3)[0], InterventionMask(0b111));
}

TEST(Cohort, ActionSetOfFourRealizedMasks) {
    const CohortDataset cohort({make_patient(1, 0b0111), make_patient(2, 0b1011), make_patient(3, 0b1101),
                                make_patient(4, 0b1110), make_patient(5, 0b0111), make_patient(6, 0b1)});
    const ActionSet set = cohort.action_set_for(cohort[1]);
    ASSERT_EQ(set.size(), 4u);
    EXPECT_NE(std::find(set.begin(), set.end(), InterventionMask(0b1011)), set.end());
    EXPECT_TRUE(std::is_sorted(set.begin(), set.end()));
    EXPECT_EQ(cohort.logged_index(cohort[1]), 1u);
}

TEST(Cohort, SingletonActionSet) {
    const CohortDataset cohort({make_patient(1, 0b0111), make_patient(2, 0b1)});
    EXPECT_EQ(cohort.action_set_for(cohort[1]).size(), 1u);
    EXPECT_EQ(cohort.logged_index(cohort[1]), 0u);
}

TEST(Cohort, ActionSetsMatchBruteForceRecount) {
    SynthConfig cfg;
    cfg.seed = 9;
    const auto cohort = generate_cohort(cfg).cohort;
    for (const auto& p : cohort.patients()) {
        std::set<std::uint32_t> expected;
        for (const auto& q : cohort.patients())
            if (q.logged_mask.popcount() == p.logged_mask.popcount()) expected.insert(q.logged_mask.bits());
        const ActionSet set = cohort.action_set_for(p);
        ASSERT_EQ(set.size(), expected.size());
        std::size_t i = 0;
        for (auto bits : expected) EXPECT_EQ(set[i++].bits(), bits);
        EXPECT_EQ(set[cohort.logged_index(p)], p.logged_mask);
    }
}

TEST(Cohort, SaveLoadSaveIsByteIdentical) {
    const auto cohort = generate_cohort(SynthConfig{}).cohort;
    const auto dir = std::filesystem::temp_directory_path() / "carebandit_domain_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "cohort.csv").string();
    save_cohort(cohort, path);
    const std::string first = text::read_file(path);
    save_cohort(load_cohort(path), path);
    EXPECT_EQ(text::read_file(path), first);
    std::filesystem::remove_all(dir);
}

TEST(Cohort, RejectsInvalidRecordsOnConstruction) {
    auto p = make_patient(1, 0b1);
    p.home_id = 0;
    EXPECT_THROW(CohortDataset({p}), LoadError);
    p = make_patient(1, 0b1);
    p.covariates[0] = std::nan("");
    EXPECT_THROW(CohortDataset({p}), LoadError);
}

TEST(Cohort, MissingFileIsLoadError) { EXPECT_THROW(load_cohort("/nonexistent/cohort.csv"), LoadError); }
