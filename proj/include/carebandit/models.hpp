#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carebandit/domain.hpp"
#include "carebandit/error.hpp"
#include "carebandit/text.hpp"

namespace carebandit {

/// Reward-model input: the full covariates X followed by the 20 intervention indicators.
inline constexpr int kModelFeatureCount = kFullCovariateCount + kInterventionCount;

inline Eigen::VectorXd model_features(const FullCovariates& x, InterventionMask mask) {
    Eigen::VectorXd row(kModelFeatureCount);
    for (int c = 0; c < kFullCovariateCount; ++c) row[c] = x[c];
    for (int k = 0; k < kInterventionCount; ++k) row[kFullCovariateCount + k] = mask.test(k) ? 1.0 : 0.0;
    return row;
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Weighted training set for a binary reward model.
struct TrainingSet {
    Eigen::MatrixXd x;  // n x kModelFeatureCount
    std::vector<int> y;
    std::vector<double> w;

    std::size_t size() const noexcept { return y.size(); }
};

inline TrainingSet make_training_set(const CohortDataset& cohort, std::span<const std::size_t> rows) {
    TrainingSet t;
    t.x.resize(static_cast<Eigen::Index>(rows.size()), kModelFeatureCount);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& p = cohort[rows[i]];
        t.x.row(static_cast<Eigen::Index>(i)) = model_features(p.covariates, p.logged_mask).transpose();
        t.y.push_back(p.outcome);
    }
    t.w.assign(rows.size(), 1.0);
    return t;
}

/// Scales the minority class weight by majority/minority count.
inline void upweight_minority(TrainingSet& t) {
    const auto ones = static_cast<double>(std::count(t.y.begin(), t.y.end(), 1));
    const auto zeros = static_cast<double>(t.y.size()) - ones;
    if (ones == 0.0 || zeros == 0.0) return;
    const int minority = ones < zeros ? 1 : 0;
    const double factor = std::max(ones, zeros) / std::min(ones, zeros);
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t.y[i] == minority) t.w[i] *= factor;
}

// ---------------------------------------------------------------------------
// Logistic regression

/// L2-penalized weighted logistic regression fit by damped Newton steps on
/// internally z-scored features. The intercept is not penalized.
struct LogisticModel {
    Eigen::VectorXd means;
    Eigen::VectorXd scales;
    Eigen::VectorXd coef;
    double intercept = 0.0;

    double logit(const Eigen::Ref<const Eigen::VectorXd>& row) const {
        return intercept + ((row - means).cwiseQuotient(scales)).dot(coef);
    }
    double probability(const Eigen::Ref<const Eigen::VectorXd>& row) const { return sigmoid(logit(row)); }

    static LogisticModel fit(const TrainingSet& t, double l2) {
        const auto n = static_cast<Eigen::Index>(t.size());
        const Eigen::Index f = t.x.cols();
        LogisticModel m;
        m.means = Eigen::VectorXd::Zero(f);
        m.scales = Eigen::VectorXd::Ones(f);
        for (Eigen::Index j = 0; j < f; ++j) {
            m.means[j] = t.x.col(j).mean();
            const double var = (t.x.col(j).array() - m.means[j]).square().sum() / static_cast<double>(n);
            if (var > 1e-24) m.scales[j] = std::sqrt(var);
        }
        // Design with a leading intercept column.
        Eigen::MatrixXd z(n, f + 1);
        z.col(0).setOnes();
        for (Eigen::Index j = 0; j < f; ++j) z.col(j + 1) = (t.x.col(j).array() - m.means[j]) / m.scales[j];
        Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(t.w.data(), n);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) y[i] = t.y[static_cast<std::size_t>(i)];

        Eigen::VectorXd penalty = Eigen::VectorXd::Constant(f + 1, l2);
        penalty[0] = 1e-10;
        auto objective = [&](const Eigen::VectorXd& beta) {
            const Eigen::VectorXd eta = z * beta;
            double loss = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double e = eta[i];
                const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
                loss += w[i] * (softplus - y[i] * e);
            }
            return loss + 0.5 * beta.cwiseProduct(penalty).dot(beta);
        };

        Eigen::VectorXd beta = Eigen::VectorXd::Zero(f + 1);
        double current = objective(beta);
        for (int iter = 0; iter < 100; ++iter) {
            const Eigen::VectorXd eta = z * beta;
            Eigen::VectorXd p(n), h(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                p[i] = sigmoid(eta[i]);
                h[i] = w[i] * std::max(p[i] * (1.0 - p[i]), 1e-12);
            }
            const Eigen::VectorXd grad = z.transpose() * (w.cwiseProduct(p - y)) + penalty.cwiseProduct(beta);
            Eigen::MatrixXd hess = z.transpose() * h.asDiagonal() * z;
            hess.diagonal() += penalty;
            const Eigen::VectorXd step = hess.ldlt().solve(grad);
            double scale = 1.0;
            Eigen::VectorXd next = beta - step;
            double value = objective(next);
            while (value > current && scale > 1e-8) {
                scale *= 0.5;
                next = beta - scale * step;
                value = objective(next);
            }
            const double moved = (scale * step).cwiseAbs().maxCoeff();
            if (value <= current) {
                beta = next;
                current = value;
            }
            if (moved < 1e-10) break;
        }
        m.intercept = beta[0];
        m.coef = beta.tail(f);
        return m;
    }
};

// ---------------------------------------------------------------------------
// Regression trees and gradient boosting

/// Binary regression tree stored as a flat node array; node 0 is the root.
/// Internal nodes route `row[feature] <= threshold` to `left`.
struct RegressionTree {
    struct Node {
        int feature = -1;
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;

        bool leaf() const noexcept { return feature < 0; }
    };

    std::vector<Node> nodes;

    double predict(const Eigen::Ref<const Eigen::VectorXd>& row) const {
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].leaf()) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = row[n.feature] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }

    std::size_t leaf_count() const {
        return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.leaf(); }));
    }

    /// Compact text form: nodes joined by ';', each "feature:threshold:left:right:value".
    std::string serialize() const {
        std::string out;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const auto& n = nodes[i];
            if (i) out += ';';
            out += std::to_string(n.feature) + ':' + text::format_double(n.threshold) + ':' + std::to_string(n.left) +
                   ':' + std::to_string(n.right) + ':' + text::format_double(n.value);
        }
        return out;
    }

    static RegressionTree parse(std::string_view s) {
        RegressionTree tree;
        for (auto node_text : text::split(s, ';')) {
            const auto f = text::split(node_text, ':');
            if (f.size() != 5) throw LoadError("malformed tree node '" + std::string(node_text) + "'");
            Node n;
            auto feature = text::parse_int<int>(f[0]);
            auto threshold = text::parse_double(f[1]);
            auto left = text::parse_int<int>(f[2]);
            auto right = text::parse_int<int>(f[3]);
            auto value = text::parse_double(f[4]);
            if (!feature || !threshold || !left || !right || !value)
                throw LoadError("malformed tree node '" + std::string(node_text) + "'");
            n.feature = *feature;
            n.threshold = *threshold;
            n.left = *left;
            n.right = *right;
            n.value = *value;
            tree.nodes.push_back(n);
        }
        const int count = static_cast<int>(tree.nodes.size());
        for (const auto& n : tree.nodes)
            if (!n.leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count))
                throw LoadError("tree node references a missing child");
        if (tree.nodes.empty()) throw LoadError("empty tree");
        return tree;
    }
};

struct BoostingParams {
    int trees = 50;
    int max_leaves = 30;
    int max_depth = 20;
    double learning_rate = 0.1;
    double l1 = 0.0;
    double l2 = 0.0;
    int min_leaf_samples = 5;
    double subsample = 1.0;
    std::uint64_t seed = 0;
};

namespace detail {

inline double soft_threshold(double g, double l1) {
    const double a = std::abs(g) - l1;
    return a > 0.0 ? std::copysign(a, g) : 0.0;
}

inline double leaf_score(double g, double h, double l1, double l2) {
    const double t = soft_threshold(g, l1);
    return t * t / (h + l2);
}

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

/// Scans features in ascending index order; the first strictly best split wins.
inline SplitCandidate best_split(const Eigen::MatrixXd& x, const std::vector<double>& g, const std::vector<double>& h,
                                 const std::vector<std::size_t>& rows, const BoostingParams& p) {
    SplitCandidate best;
    double g_total = 0.0, h_total = 0.0;
    for (auto r : rows) {
        g_total += g[r];
        h_total += h[r];
    }
    const double parent = leaf_score(g_total, h_total, p.l1, p.l2);
    const std::size_t m = rows.size();
    if (m < 2 * static_cast<std::size_t>(p.min_leaf_samples)) return best;

    std::vector<std::size_t> sorted(rows);
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        std::stable_sort(sorted.begin(), sorted.end(),
                         [&](std::size_t a, std::size_t b) { return x(static_cast<Eigen::Index>(a), f) < x(static_cast<Eigen::Index>(b), f); });
        double gl = 0.0, hl = 0.0;
        for (std::size_t i = 0; i + 1 < m; ++i) {
            gl += g[sorted[i]];
            hl += h[sorted[i]];
            const double v = x(static_cast<Eigen::Index>(sorted[i]), f);
            const double v_next = x(static_cast<Eigen::Index>(sorted[i + 1]), f);
            if (v == v_next) continue;
            const std::size_t left_count = i + 1;
            if (left_count < static_cast<std::size_t>(p.min_leaf_samples) ||
                m - left_count < static_cast<std::size_t>(p.min_leaf_samples))
                continue;
            const double gr = g_total - gl, hr = h_total - hl;
            if (hl < 1e-3 || hr < 1e-3) continue;
            const double gain = leaf_score(gl, hl, p.l1, p.l2) + leaf_score(gr, hr, p.l1, p.l2) - parent;
            if (gain > best.gain + 1e-12) {
                best.feature = static_cast<int>(f);
                best.threshold = 0.5 * (v + v_next);
                best.gain = gain;
            }
        }
    }
    return best;
}

}  // namespace detail

/// Gradient-boosted regression trees on logistic loss. Trees grow leaf-wise
/// (best gain first) up to `max_leaves`, bounded by `max_depth`. Leaf values
/// use L1 soft-thresholding and L2 shrinkage of the gradient sums.
struct BoostedModel {
    double base_score = 0.0;
    std::vector<RegressionTree> trees;
    bool constant = false;

    double logit(const Eigen::Ref<const Eigen::VectorXd>& row) const {
        double s = base_score;
        for (const auto& t : trees) s += t.predict(row);
        return s;
    }
    double probability(const Eigen::Ref<const Eigen::VectorXd>& row) const { return sigmoid(logit(row)); }

    static BoostedModel fit(const TrainingSet& t, const BoostingParams& p) {
        const std::size_t n = t.size();
        BoostedModel model;
        double wy = 0.0, wn = 0.0;
        for (std::size_t i = 0; i < n; ++i) (t.y[i] ? wy : wn) += t.w[i];
        if (wy <= 0.0 || wn <= 0.0) throw Error("boosting needs both outcome classes");
        model.base_score = std::log(wy / wn);

        std::vector<double> score(n, model.base_score), g(n), h(n);
        std::mt19937_64 rng(p.seed);
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});

        for (int round = 0; round < p.trees; ++round) {
            for (std::size_t i = 0; i < n; ++i) {
                const double prob = sigmoid(score[i]);
                g[i] = t.w[i] * (prob - t.y[i]);
                h[i] = t.w[i] * std::max(prob * (1.0 - prob), 1e-12);
            }
            std::vector<std::size_t> rows = all;
            if (p.subsample < 1.0) {
                std::shuffle(rows.begin(), rows.end(), rng);
                rows.resize(std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(p.subsample * static_cast<double>(n)))));
                std::sort(rows.begin(), rows.end());
            }
            RegressionTree tree = grow_tree(t.x, g, h, rows, p);
            if (tree.nodes.size() == 1) {
                if (round == 0) model.constant = true;
                break;
            }
            for (std::size_t i = 0; i < n; ++i) score[i] += tree.predict(t.x.row(static_cast<Eigen::Index>(i)).transpose());
            model.trees.push_back(std::move(tree));
        }
        return model;
    }

private:
    static RegressionTree grow_tree(const Eigen::MatrixXd& x, const std::vector<double>& g,
                                    const std::vector<double>& h, std::vector<std::size_t> rows,
                                    const BoostingParams& p) {
        struct Open {
            int node;
            int depth;
            std::vector<std::size_t> rows;
            detail::SplitCandidate split;
        };
        RegressionTree tree;
        auto leaf_value = [&](const std::vector<std::size_t>& r) {
            double gs = 0.0, hs = 0.0;
            for (auto i : r) {
                gs += g[i];
                hs += h[i];
            }
            return -p.learning_rate * detail::soft_threshold(gs, p.l1) / (hs + p.l2);
        };
        auto consider = [&](int node, int depth, std::vector<std::size_t> r) {
            Open o{node, depth, std::move(r), {}};
            if (depth < p.max_depth) o.split = detail::best_split(x, g, h, o.rows, p);
            return o;
        };

        tree.nodes.push_back({});
        tree.nodes[0].value = leaf_value(rows);
        std::vector<Open> open;
        open.push_back(consider(0, 0, std::move(rows)));
        int leaves = 1;
        while (leaves < p.max_leaves) {
            int pick = -1;
            for (std::size_t i = 0; i < open.size(); ++i)
                if (open[i].split.feature >= 0 && (pick < 0 || open[i].split.gain > open[static_cast<std::size_t>(pick)].split.gain))
                    pick = static_cast<int>(i);
            if (pick < 0) break;
            Open o = std::move(open[static_cast<std::size_t>(pick)]);
            open.erase(open.begin() + pick);

            std::vector<std::size_t> left, right;
            for (auto r : o.rows) (x(static_cast<Eigen::Index>(r), o.split.feature) <= o.split.threshold ? left : right).push_back(r);
            const int li = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back({});
            tree.nodes.push_back({});
            auto& parent = tree.nodes[static_cast<std::size_t>(o.node)];
            parent.feature = o.split.feature;
            parent.threshold = o.split.threshold;
            parent.left = li;
            parent.right = li + 1;
            parent.value = 0.0;
            tree.nodes[static_cast<std::size_t>(li)].value = leaf_value(left);
            tree.nodes[static_cast<std::size_t>(li + 1)].value = leaf_value(right);
            open.push_back(consider(li, o.depth + 1, std::move(left)));
            open.push_back(consider(li + 1, o.depth + 1, std::move(right)));
            ++leaves;
        }
        return tree;
    }
};

}  // namespace carebandit
