#include "pdxitr/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pdxitr {

double RegressionTree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
        const auto& node = nodes[static_cast<std::size_t>(k)];
        k = x(node.feature) <= node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(k)].value;
}

double Forest::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    if (x.size() != n_features) throw ValidationError("forest: feature width mismatch");
    double total = 0.0;
    for (const auto& t : trees) total += t.predict_row(x);
    return total / static_cast<double>(trees.size());
}

Eigen::VectorXd Forest::predict(const Eigen::MatrixXd& X) const {
    if (X.cols() != n_features)
        throw ValidationError("forest expects " + std::to_string(n_features) + " features, got " +
                              std::to_string(X.cols()));
    Eigen::VectorXd out(X.rows());
    for (Index i = 0; i < X.rows(); ++i) out(i) = predict_row(X.row(i));
    return out;
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
                std::mt19937_64& rng)
        : X_(X), y_(y), params_(params), rng_(rng) {
        const auto p = static_cast<int>(X.cols());
        n_try_ = std::clamp(static_cast<int>(std::floor(params.feature_fraction * p)), 1, std::max(p, 1));
        features_.resize(static_cast<std::size_t>(p));
        std::iota(features_.begin(), features_.end(), 0);
    }

    RegressionTree build(std::vector<Index> rows) {
        RegressionTree tree;
        grow(tree, rows, 0);
        return tree;
    }

private:
    int grow(RegressionTree& tree, std::vector<Index>& rows, int depth) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        double sum = 0.0;
        for (Index r : rows) sum += y_(r);
        const double mean = sum / static_cast<double>(rows.size());
        tree.nodes[static_cast<std::size_t>(id)].value = mean;

        const auto n = rows.size();
        const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);
        if ((params_.max_depth >= 0 && depth >= params_.max_depth) || n < 2 * min_leaf || X_.cols() == 0)
            return id;

        // Sample candidate features without replacement.
        for (int k = 0; k < n_try_; ++k) {
            std::uniform_int_distribution<int> pick(k, static_cast<int>(features_.size()) - 1);
            std::swap(features_[static_cast<std::size_t>(k)], features_[static_cast<std::size_t>(pick(rng_))]);
        }
        std::vector<int> candidates(features_.begin(), features_.begin() + n_try_);

        double best_gain = 1e-12 * std::max(1.0, std::abs(mean));
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<Index> sorted = rows;
        for (int f : candidates) {
            std::sort(sorted.begin(), sorted.end(), [&](Index a, Index b) {
                const double xa = X_(a, f), xb = X_(b, f);
                return xa < xb || (xa == xb && a < b);
            });
            double left_sum = 0.0;
            for (std::size_t k = 0; k + 1 < n; ++k) {
                left_sum += y_(sorted[k]);
                const std::size_t n_left = k + 1;
                if (n_left < min_leaf || n - n_left < min_leaf) continue;
                const double x_here = X_(sorted[k], f);
                const double x_next = X_(sorted[k + 1], f);
                if (x_here == x_next) continue;
                const double right_sum = sum - left_sum;
                // SSE reduction up to a constant: sum_L^2/n_L + sum_R^2/n_R - sum^2/n
                const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                                    right_sum * right_sum / static_cast<double>(n - n_left) -
                                    sum * sum / static_cast<double>(n);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                    best_threshold = 0.5 * (x_here + x_next);
                }
            }
        }
        if (best_feature < 0) return id;

        std::vector<Index> left_rows, right_rows;
        for (Index r : rows) (X_(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        const int left = grow(tree, left_rows, depth + 1);
        const int right = grow(tree, right_rows, depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = left;
        node.right = right;
        return id;
    }

    const Eigen::MatrixXd& X_;
    const Eigen::VectorXd& y_;
    const ForestParams& params_;
    std::mt19937_64& rng_;
    int n_try_ = 1;
    std::vector<int> features_;
};

}  // namespace

Forest fit_random_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
                         std::uint64_t seed) {
    if (X.rows() != y.size()) throw ValidationError("forest: X rows and y length differ");
    if (X.rows() < 2) throw ValidationError("forest: at least two observations required");
    if (params.n_trees < 1) throw ValidationError("forest: n_trees must be positive");
    if (params.min_leaf < 1 || params.min_leaf > X.rows())
        throw ValidationError("forest: leaf size " + std::to_string(params.min_leaf) + " exceeds n = " +
                              std::to_string(X.rows()));
    if (!X.allFinite() || !y.allFinite()) throw ValidationError("forest: non-finite inputs");

    Forest forest;
    forest.params = params;
    forest.seed = seed;
    forest.n_features = X.cols();
    forest.trees.reserve(static_cast<std::size_t>(params.n_trees));
    const Index n = X.rows();
    for (int t = 0; t < params.n_trees; ++t) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        std::vector<Index> rows(static_cast<std::size_t>(n));
        if (params.bootstrap) {
            std::uniform_int_distribution<Index> draw(0, n - 1);
            for (auto& r : rows) r = draw(rng);
        } else {
            std::iota(rows.begin(), rows.end(), Index{0});
        }
        TreeBuilder builder(X, y, params, rng);
        forest.trees.push_back(builder.build(std::move(rows)));
    }
    return forest;
}

}  // namespace pdxitr
