#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "carebandit/error.hpp"

namespace carebandit {

/// Online ridge regression shared by LinUCB and LinTS.
///
/// Holds the regularized gram matrix B = lambda*I + sum(b b^T), its inverse
/// maintained by rank-1 (Sherman-Morrison) updates, the response accumulator
/// f = sum(r b), and the mean estimate mu = B^{-1} f. Every
/// `kReinvertEvery` updates the inverse is rebuilt from B through a Cholesky
/// solve to bound drift.
class RidgeState {
public:
    static constexpr std::uint64_t kReinvertEvery = 1000;

    RidgeState(int dim, double lambda) : dim_(dim), lambda_(lambda) {
        if (dim < 1) throw ConfigError("ridge dimension must be >= 1, got " + std::to_string(dim));
        if (!(lambda > 0.0) || !std::isfinite(lambda))
            throw ConfigError("ridge lambda must be a positive finite number");
        gram_ = lambda * Eigen::MatrixXd::Identity(dim, dim);
        inverse_ = (1.0 / lambda) * Eigen::MatrixXd::Identity(dim, dim);
        response_ = Eigen::VectorXd::Zero(dim);
        mean_ = Eigen::VectorXd::Zero(dim);
    }

    int dim() const noexcept { return dim_; }
    double lambda() const noexcept { return lambda_; }
    std::uint64_t updates() const noexcept { return updates_; }

    const Eigen::MatrixXd& gram() const noexcept { return gram_; }
    const Eigen::MatrixXd& inverse() const noexcept { return inverse_; }
    const Eigen::VectorXd& response() const noexcept { return response_; }
    const Eigen::VectorXd& mean() const noexcept { return mean_; }

    /// Adds one observation (b, r). Non-finite input throws and leaves the state untouched.
    void update(const Eigen::Ref<const Eigen::VectorXd>& b, double r) {
        check_dim(b);
        if (!b.allFinite() || !std::isfinite(r)) throw NumericalError("ridge update with non-finite input");

        gram_.noalias() += b * b.transpose();
        response_.noalias() += r * b;
        ++updates_;

        if (updates_ % kReinvertEvery == 0) {
            reinvert();
        } else {
            const Eigen::VectorXd ib = inverse_ * b;
            const double denom = 1.0 + b.dot(ib);
            inverse_.noalias() -= (ib * ib.transpose()) / denom;
            // Keep the maintained inverse exactly symmetric.
            inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
        }
        mean_.noalias() = inverse_ * response_;
    }

    /// sqrt(b^T B^{-1} b).
    double confidence_width(const Eigen::Ref<const Eigen::VectorXd>& b) const {
        check_dim(b);
        const double q = b.dot(inverse_ * b);
        return q > 0.0 ? std::sqrt(q) : 0.0;
    }

    double predict(const Eigen::Ref<const Eigen::VectorXd>& b) const {
        check_dim(b);
        return b.dot(mean_);
    }

    /// One draw from N(mean, v^2 B^{-1}) as mean + v L z with L L^T = B^{-1}.
    template <typename Rng>
    Eigen::VectorXd sample_coefficients(double v, Rng& rng) const {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("sampling scale v must be positive");
        Eigen::LLT<Eigen::MatrixXd> llt(inverse_);
        if (llt.info() != Eigen::Success)
            throw NumericalError("Cholesky factorization of the inverse gram matrix failed");
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd z(dim_);
        for (int i = 0; i < dim_; ++i) z[i] = normal(rng);
        Eigen::VectorXd draw = llt.matrixL() * z;
        return mean_ + v * draw;
    }

    /// Rebuilds the inverse from B directly.
    void reinvert() {
        Eigen::LLT<Eigen::MatrixXd> llt(gram_);
        if (llt.info() != Eigen::Success) throw NumericalError("gram matrix lost positive-definiteness");
        inverse_ = llt.solve(Eigen::MatrixXd::Identity(dim_, dim_));
        inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
        mean_.noalias() = inverse_ * response_;
    }

private:
    void check_dim(const Eigen::Ref<const Eigen::VectorXd>& b) const {
        if (b.size() != dim_)
            throw ConfigError("vector of length " + std::to_string(b.size()) + " does not match ridge dimension " +
                              std::to_string(dim_));
    }

    int dim_;
    double lambda_;
    std::uint64_t updates_ = 0;
    Eigen::MatrixXd gram_;
    Eigen::MatrixXd inverse_;
    Eigen::VectorXd response_;
    Eigen::VectorXd mean_;
};

}  // namespace carebandit
