#include "pdxitr/itr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdxitr {

double Regressor::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return kind == RegressorKind::Lasso ? linear.predict_row(x) : forest.predict_row(x);
}

Eigen::VectorXd Regressor::predict(const Eigen::MatrixXd& X) const {
    return kind == RegressorKind::Lasso ? linear.predict(X) : forest.predict(X);
}

Regressor fit_regressor(const RegressorSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        std::uint64_t seed) {
    Regressor out;
    out.kind = spec.kind;
    if (spec.kind == RegressorKind::Lasso) {
        if (!(spec.lambda_ratio >= 0.0)) throw ValidationError("lasso lambda ratio must be >= 0");
        const double lambda = spec.lambda_ratio * lasso_lambda_max(X, y);
        out.linear = fit_lasso(X, y, lambda);
    } else {
        ForestParams params = spec.forest;
        params.min_leaf = std::clamp(params.min_leaf, 1, static_cast<int>(X.rows()));
        out.forest = fit_random_forest(X, y, params, seed);
    }
    return out;
}

double NodeRule::arm_score(const Eigen::Ref<const Eigen::RowVectorXd>& x, bool left_arm) const {
    if (kind == Kind::Decision) {
        const double f = decision.value(x);
        return left_arm ? f : -f;
    }
    return left_arm ? left.predict_row(x) : right.predict_row(x);
}

double NodeRule::margin(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    if (kind == Kind::Decision) return decision.value(x);
    return left.predict_row(x) - right.predict_row(x);
}

int TreeItr::descend(const Eigen::Ref<const Eigen::RowVectorXd>& x, int node) const {
    for (;;) {
        const auto& dn = grouping.internal_nodes[static_cast<std::size_t>(node)];
        const ChildRef& next = rules[static_cast<std::size_t>(node)].goes_left(x) ? dn.left : dn.right;
        if (next.is_group) return next.index + 1;
        node = next.index;
    }
}

double TreeItr::step0_score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return step0.predict_row(x); }

int TreeItr::recommend_code(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    if (x.size() != feature_width)
        throw ValidationError("ITR expects " + std::to_string(feature_width) + " features, got " +
                              std::to_string(x.size()));
    if (!(step0_score(x) > 0.0)) return 0;
    return descend(x, 0);
}

const std::vector<Index>& recommend(const TreeItr& itr, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    return itr.grouping.treatments_of(itr.recommend_code(x));
}

namespace {

/// Shared bottom-up driver for the Q-learning and OWL fits.
class TreeFitter {
public:
    TreeFitter(const CenteredRewards& rewards, const Eigen::MatrixXd& X, TreeItr& itr)
        : rewards_(rewards), X_(X), itr_(itr) {
        if (X.rows() != rewards.lines())
            throw ValidationError("feature rows (" + std::to_string(X.rows()) + ") do not match reward lines (" +
                                  std::to_string(rewards.lines()) + ")");
        if (itr.grouping.internal_nodes.empty()) throw ValidationError("grouping has no decision nodes");
        itr_.feature_width = X.cols();
        itr_.rules.resize(itr.grouping.internal_nodes.size());
    }

    double group_reward(int group, Index line) const {
        return mean_reward(rewards_, itr_.grouping.groups[static_cast<std::size_t>(group)], line);
    }

    double max_group_reward(const std::vector<int>& groups, Index line) const {
        double best = kMissing;
        for (int g : groups) {
            const double r = group_reward(g, line);
            if (is_present(r) && (!is_present(best) || r > best)) best = r;
        }
        return best;
    }

    /// Reward credited to a line for the subtree rooted at decision node `node`.
    double subtree_reward(int node, Index line) const {
        const auto& dn = itr_.grouping.internal_nodes[static_cast<std::size_t>(node)];
        if (itr_.propagation == Propagation::MaxDownstream) {
            std::vector<int> all = dn.left_groups;
            all.insert(all.end(), dn.right_groups.begin(), dn.right_groups.end());
            return max_group_reward(all, line);
        }
        if (itr_.variant == ItrVariant::QL2) {
            const auto& rule = itr_.rules[static_cast<std::size_t>(node)];
            return std::max(rule.arm_score(X_.row(line), true), rule.arm_score(X_.row(line), false));
        }
        return group_reward(itr_.descend(X_.row(line), node) - 1, line);
    }

    double arm_reward(const ChildRef& ref, Index line) const {
        return ref.is_group ? group_reward(ref.index, line) : subtree_reward(ref.index, line);
    }

    struct NodeData {
        std::vector<Index> lines;
        Eigen::MatrixXd X;
        Eigen::VectorXd left;
        Eigen::VectorXd right;
    };

    NodeData node_data(int node) const {
        const auto& dn = itr_.grouping.internal_nodes[static_cast<std::size_t>(node)];
        NodeData d;
        std::vector<double> l, r;
        for (Index j = 0; j < rewards_.lines(); ++j) {
            const double a = arm_reward(dn.left, j);
            const double b = arm_reward(dn.right, j);
            if (!is_present(a) || !is_present(b)) continue;
            d.lines.push_back(j);
            l.push_back(a);
            r.push_back(b);
        }
        if (d.lines.size() < 2)
            throw NumericalError("unfittable node " + std::to_string(node) + ": fewer than two lines observe both arms");
        d.X.resize(static_cast<Index>(d.lines.size()), X_.cols());
        for (std::size_t k = 0; k < d.lines.size(); ++k) d.X.row(static_cast<Index>(k)) = X_.row(d.lines[k]);
        d.left = Eigen::Map<Eigen::VectorXd>(l.data(), static_cast<Index>(l.size()));
        d.right = Eigen::Map<Eigen::VectorXd>(r.data(), static_cast<Index>(r.size()));
        return d;
    }

    void fit_step0(const RegressorSpec& spec, std::uint64_t seed) {
        std::vector<Index> lines;
        std::vector<double> target;
        for (Index j = 0; j < rewards_.lines(); ++j) {
            const double v = subtree_reward(0, j);
            if (!is_present(v)) continue;
            lines.push_back(j);
            target.push_back(v);
        }
        if (lines.size() < 2) throw NumericalError("unfittable step 0: fewer than two lines with rewards");
        Eigen::MatrixXd Xs(static_cast<Index>(lines.size()), X_.cols());
        for (std::size_t k = 0; k < lines.size(); ++k) Xs.row(static_cast<Index>(k)) = X_.row(lines[k]);
        Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(target.data(), static_cast<Index>(target.size()));
        itr_.step0 = fit_regressor(spec, Xs, y, seed);
    }

    int node_count() const { return static_cast<int>(itr_.grouping.internal_nodes.size()); }

private:
    const CenteredRewards& rewards_;
    const Eigen::MatrixXd& X_;
    TreeItr& itr_;
};

}  // namespace

TreeItr fit_tree_qlearning(const CenteredRewards& rewards, const TreatmentGrouping& grouping,
                           const Eigen::MatrixXd& X, const QLearningOptions& options) {
    if (options.variant == ItrVariant::OWL) throw ValidationError("fit_tree_qlearning: variant must be QL1 or QL2");
    TreeItr itr;
    itr.variant = options.variant;
    itr.propagation = options.propagation;
    itr.learner = options.learner;
    itr.lambda = options.learner.lambda_ratio;
    itr.grouping = grouping;
    TreeFitter fitter(rewards, X, itr);

    for (int node = fitter.node_count() - 1; node >= 0; --node) {
        auto data = fitter.node_data(node);
        auto& rule = itr.rules[static_cast<std::size_t>(node)];
        rule.kind = NodeRule::Kind::RegressionPair;
        rule.left = fit_regressor(options.learner, data.X, data.left, derive_seed(options.seed, 2 * node));
        rule.right = fit_regressor(options.learner, data.X, data.right, derive_seed(options.seed, 2 * node + 1));
    }
    fitter.fit_step0(options.learner, derive_seed(options.seed, 1000003));
    return itr;
}

TreeItr fit_tree_owl(const CenteredRewards& rewards, const TreatmentGrouping& grouping, const Eigen::MatrixXd& X,
                     const OwlOptions& options) {
    if (!(options.lambda > 0.0)) throw ValidationError("OWL lambda must be > 0");
    TreeItr itr;
    itr.variant = ItrVariant::OWL;
    itr.propagation = options.propagation;
    itr.learner = options.step0;
    itr.kernel = options.kernel;
    itr.lambda = options.lambda;
    itr.grouping = grouping;
    TreeFitter fitter(rewards, X, itr);

    for (int node = fitter.node_count() - 1; node >= 0; --node) {
        auto data = fitter.node_data(node);
        const Index n = static_cast<Index>(data.lines.size());
        Eigen::MatrixXd Xo(2 * n, X.cols());
        Eigen::VectorXi labels(2 * n);
        Eigen::VectorXd r(2 * n);
        for (Index k = 0; k < n; ++k) {
            Xo.row(2 * k) = data.X.row(k);
            labels(2 * k) = 1;
            r(2 * k) = data.left(k);
            Xo.row(2 * k + 1) = data.X.row(k);
            labels(2 * k + 1) = -1;
            r(2 * k + 1) = data.right(k);
        }
        const double scale = r.cwiseAbs().mean();
        if (!(scale > 0.0)) throw NumericalError("degenerate weights: all rewards are zero at node " + std::to_string(node));
        auto& rule = itr.rules[static_cast<std::size_t>(node)];
        rule.kind = NodeRule::Kind::Decision;
        rule.decision = fit_weighted_classifier(Xo, labels, r, options.kernel, options.lambda * scale, options.classifier);
    }
    fitter.fit_step0(options.step0, derive_seed(options.seed, 1000003));
    return itr;
}

Eigen::RowVectorXd flat_design_row(RegressorKind kind, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                   Index treatment_slot, Index n_treatments) {
    const Index p = x.size();
    const Index width = kind == RegressorKind::Lasso ? p + n_treatments + p * n_treatments : p + n_treatments;
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(width);
    row.head(p) = x;
    row(p + treatment_slot) = 1.0;
    if (kind == RegressorKind::Lasso) row.segment(p + n_treatments + treatment_slot * p, p) = x;
    return row;
}

Eigen::VectorXd FlatItr::predicted_rewards(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    if (x.size() != feature_width) throw ValidationError("flat ITR: feature width mismatch");
    const auto k = static_cast<Index>(treatments.size());
    Eigen::VectorXd out(k);
    for (Index t = 0; t < k; ++t) out(t) = model.predict_row(flat_design_row(kind, x, t, k));
    return out;
}

Index FlatItr::recommend_treatment(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    Eigen::VectorXd pred = predicted_rewards(x);
    Index best = 0;
    for (Index t = 1; t < pred.size(); ++t)
        if (pred(t) > pred(best)) best = t;
    return treatments[static_cast<std::size_t>(best)];
}

FlatItr fit_off_the_shelf(const CenteredRewards& rewards, const Eigen::MatrixXd& X, const RegressorSpec& learner,
                          std::uint64_t seed) {
    if (X.rows() != rewards.lines()) throw ValidationError("feature rows do not match reward lines");
    FlatItr out;
    out.kind = learner.kind;
    if (rewards.active.empty()) throw ValidationError("off-the-shelf ITR needs at least one non-null treatment");
    out.treatments = rewards.active;
    out.treatments.insert(out.treatments.end(), rewards.null_group.begin(), rewards.null_group.end());
    std::sort(out.treatments.begin(), out.treatments.end());
    for (Index i : out.treatments) out.labels.push_back(rewards.treatments[static_cast<std::size_t>(i)]);
    out.feature_width = X.cols();
    const auto k = static_cast<Index>(out.treatments.size());

    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> y;
    for (Index j = 0; j < rewards.lines(); ++j)
        for (Index t = 0; t < k; ++t) {
            const double r = rewards.reward(out.treatments[static_cast<std::size_t>(t)], j);
            if (!is_present(r)) continue;
            rows.push_back(flat_design_row(learner.kind, X.row(j), t, k));
            y.push_back(r);
        }
    if (rows.size() < 2) throw NumericalError("off-the-shelf ITR: fewer than two observed rewards");
    Eigen::MatrixXd design(static_cast<Index>(rows.size()), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) design.row(static_cast<Index>(r)) = rows[r];
    Eigen::VectorXd target = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Index>(y.size()));
    out.model = fit_regressor(learner, design, target, seed);
    return out;
}

}  // namespace pdxitr
