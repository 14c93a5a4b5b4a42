#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "carebandit/ridge.hpp"

using carebandit::RidgeState;

namespace {

Eigen::VectorXd random_vector(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = n(rng);
    return v;
}

// Independent reconstruction of the ridge statistics from the raw history.
struct DirectRidge {
    Eigen::MatrixXd gram;
    Eigen::VectorXd response;
    DirectRidge(int d, double lambda) : gram(lambda * Eigen::MatrixXd::Identity(d, d)), response(Eigen::VectorXd::Zero(d)) {}
    void add(const Eigen::VectorXd& b, double r) {
        for (int i = 0; i < b.size(); ++i) {
            response[i] += r * b[i];
            for (int j = 0; j < b.size(); ++j) gram(i, j) += b[i] * b[j];
        }
    }
    Eigen::MatrixXd inverse() const { return gram.fullPivLu().inverse(); }
    Eigen::VectorXd mean() const { return gram.fullPivLu().solve(response); }
};

}  // namespace

TEST(Ridge, IdentityInit) {
    RidgeState s(2, 1.0);
    EXPECT_TRUE(s.gram().isApprox(Eigen::MatrixXd::Identity(2, 2)));
    EXPECT_EQ(s.mean(), Eigen::VectorXd::Zero(2));
}

TEST(Ridge, ScalarInverse) {
    RidgeState s(3, 0.5);
    EXPECT_EQ(s.inverse(), 2.0 * Eigen::MatrixXd::Identity(3, 3));
}

TEST(Ridge, DiagonalCaseAtFullDimension) {
    RidgeState s(125, 1.0);
    EXPECT_EQ((s.gram() * s.inverse() - Eigen::MatrixXd::Identity(125, 125)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ridge, RejectsBadConstruction) {
    EXPECT_THROW(RidgeState(0, 1.0), carebandit::ConfigError);
    EXPECT_THROW(RidgeState(2, 0.0), carebandit::ConfigError);
    EXPECT_THROW(RidgeState(2, -1.0), carebandit::ConfigError);
}

TEST(Ridge, ZeroVectorUpdateOnlyCounts) {
    RidgeState s(4, 1.0);
    s.update(Eigen::VectorXd::Ones(4), 1.0);
    const auto gram = s.gram();
    const auto inv = s.inverse();
    const auto mean = s.mean();
    s.update(Eigen::VectorXd::Zero(4), 123.0);
    EXPECT_EQ(s.gram(), gram);
    EXPECT_EQ(s.inverse(), inv);
    EXPECT_EQ(s.mean(), mean);
    EXPECT_EQ(s.updates(), 2u);
}

TEST(Ridge, ScalarArithmetic) {
    RidgeState s(1, 1.0);
    s.update(Eigen::VectorXd::Ones(1), 1.0);
    EXPECT_DOUBLE_EQ(s.gram()(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(s.mean()[0], 0.5);
}

TEST(Ridge, NonFiniteUpdateLeavesStateUntouched) {
    RidgeState s(2, 1.0);
    Eigen::VectorXd b(2);
    b << 1.0, std::nan("");
    EXPECT_THROW(s.update(b, 1.0), carebandit::NumericalError);
    EXPECT_THROW(s.update(Eigen::VectorXd::Ones(2), INFINITY), carebandit::NumericalError);
    EXPECT_EQ(s.updates(), 0u);
    EXPECT_EQ(s.gram(), Eigen::MatrixXd::Identity(2, 2));
}

TEST(Ridge, DimensionMismatchThrows) {
    RidgeState s(3, 1.0);
    EXPECT_THROW(s.update(Eigen::VectorXd::Ones(2), 1.0), carebandit::ConfigError);
    EXPECT_THROW(s.confidence_width(Eigen::VectorXd::Ones(4)), carebandit::ConfigError);
}

TEST(Ridge, MaintainedInverseMatchesDirectInverse) {
    std::mt19937_64 rng(7);
    RidgeState s(25, 1.0);
    DirectRidge direct(25, 1.0);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int t = 0; t < 1000; ++t) {
        const Eigen::VectorXd b = random_vector(25, rng);
        const double r = coin(rng);
        s.update(b, r);
        direct.add(b, r);
        ASSERT_LE((s.inverse() - direct.inverse()).cwiseAbs().maxCoeff(), 1e-8) << "step " << t;
        ASSERT_LE((s.mean() - direct.mean()).cwiseAbs().maxCoeff(), 1e-8) << "step " << t;
    }
}

TEST(Ridge, InverseStaysSymmetric) {
    std::mt19937_64 rng(3);
    RidgeState s(10, 2.0);
    for (int t = 0; t < 300; ++t) s.update(random_vector(10, rng), 0.5);
    EXPECT_EQ(s.inverse(), s.inverse().transpose());
}

TEST(Ridge, ConfidenceWidthClosedForm) {
    RidgeState s1(3, 1.0);
    EXPECT_DOUBLE_EQ(s1.confidence_width(Eigen::VectorXd::Unit(3, 0)), 1.0);
    RidgeState s4(3, 4.0);
    EXPECT_DOUBLE_EQ(s4.confidence_width(Eigen::VectorXd::Unit(3, 0)), 0.5);
    // After one update along e1 with lambda = 1 the width is sqrt(1/2).
    s1.update(Eigen::VectorXd::Unit(3, 0), 1.0);
    EXPECT_NEAR(s1.confidence_width(Eigen::VectorXd::Unit(3, 0)), std::sqrt(0.5), 1e-15);
}

TEST(Ridge, ConfidenceWidthShrinksAlongRepeatedDirection) {
    std::mt19937_64 rng(11);
    RidgeState s(6, 1.0);
    const Eigen::VectorXd b = random_vector(6, rng);
    double prev = s.confidence_width(b);
    for (int t = 0; t < 200; ++t) {
        s.update(b, 1.0);
        if (t % 3 == 0) s.update(random_vector(6, rng), 0.0);
        const double w = s.confidence_width(b);
        ASSERT_LE(w, prev + 1e-12);
        prev = w;
    }
}

TEST(Ridge, SampleIsDeterministicForSeed) {
    std::mt19937_64 rng(1);
    RidgeState s(5, 1.0);
    for (int t = 0; t < 20; ++t) s.update(random_vector(5, rng), 1.0);
    std::mt19937_64 a(99), b(99);
    EXPECT_EQ(s.sample_coefficients(0.7, a), s.sample_coefficients(0.7, b));
}

TEST(Ridge, SampleCollapsesToMeanAsScaleVanishes) {
    std::mt19937_64 rng(2);
    RidgeState s(4, 1.0);
    for (int t = 0; t < 50; ++t) s.update(random_vector(4, rng), t % 2);
    for (double v : {1e-2, 1e-5, 1e-8}) {
        std::mt19937_64 g(5);
        const Eigen::VectorXd draw = s.sample_coefficients(v, g);
        // |v L z| <= v * ||L||_F * ||z||; with ||z|| well under 10 for d = 4.
        const double bound = v * std::sqrt(s.inverse().trace()) * 10.0;
        EXPECT_LE((draw - s.mean()).norm(), bound);
    }
}

TEST(Ridge, SampleRejectsNonPositiveScale) {
    RidgeState s(2, 1.0);
    std::mt19937_64 g(0);
    EXPECT_THROW(s.sample_coefficients(0.0, g), carebandit::ConfigError);
}

TEST(Ridge, SampleMomentsMatchPosteriorAfterUpdates) {
    RidgeState s(2, 1.0);
    Eigen::VectorXd b(2);
    b << 1.0, 2.0;
    s.update(b, 1.0);
    b << -1.0, 0.5;
    s.update(b, 0.0);
    std::mt19937_64 g(17);
    const int n = 100000;
    const double v = 0.8;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd d = s.sample_coefficients(v, g);
        mean += d;
        second += (d - s.mean()) * (d - s.mean()).transpose();
    }
    mean /= n;
    second /= n;
    EXPECT_LE((mean - s.mean()).cwiseAbs().maxCoeff(), 0.02);
    EXPECT_LE((second - v * v * s.inverse()).cwiseAbs().maxCoeff(), 0.02);
}
