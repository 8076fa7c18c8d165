#pragma once

#include "pdxitr/core.hpp"
#include "pdxitr/learners.hpp"
#include "pdxitr/treatment_tree.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace pdxitr {

enum class RegressorKind { Lasso, Forest };

/// Embedded regression learner. For the lasso, the penalty is
/// lambda_ratio * lambda_max of each individual fit.
struct RegressorSpec {
    RegressorKind kind = RegressorKind::Lasso;
    double lambda_ratio = 0.1;
    ForestParams forest{};
};

struct Regressor {
    RegressorKind kind = RegressorKind::Lasso;
    LinearModel linear;
    Forest forest;

    double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

Regressor fit_regressor(const RegressorSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        std::uint64_t seed);

enum class ItrVariant { QL1, QL2, OWL };

/// How a node obtains the reward of an arm whose child is another decision node.
enum class Propagation {
    /// Reward of the group that the child's fitted rule selects for the line.
    SelectedGroup,
    /// Largest observed group reward below the child.
    MaxDownstream,
};

/// Decision rule at one internal node of the cut treatment tree. Regression
/// nodes hold one regressor per arm; OWL nodes hold a decision function whose
/// positive side is the left arm.
struct NodeRule {
    enum class Kind { RegressionPair, Decision };
    Kind kind = Kind::RegressionPair;
    Regressor left;
    Regressor right;
    DecisionFunction decision;

    /// Predicted reward of an arm (regression) or the margin oriented toward it (OWL).
    double arm_score(const Eigen::Ref<const Eigen::RowVectorXd>& x, bool left_arm) const;
    /// Non-negative means "take the left arm".
    double margin(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    bool goes_left(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return margin(x) >= 0.0; }
};

struct TreeItr {
    ItrVariant variant = ItrVariant::QL1;
    Propagation propagation = Propagation::SelectedGroup;
    RegressorSpec learner;
    KernelKind kernel = KernelKind::Linear;
    double lambda = 0.0;
    TreatmentGrouping grouping;
    /// Aligned with grouping.internal_nodes.
    std::vector<NodeRule> rules;
    /// Predicts the reward of the best non-null group; non-null iff > 0.
    Regressor step0;
    std::vector<std::string> feature_names;
    Index feature_width = 0;

    /// Group code reached from decision node `node` (1-based leaf group).
    int descend(const Eigen::Ref<const Eigen::RowVectorXd>& x, int node = 0) const;
    /// 0 for the null group, otherwise 1 + leaf group index.
    int recommend_code(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    double step0_score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct QLearningOptions {
    ItrVariant variant = ItrVariant::QL1;
    RegressorSpec learner;
    Propagation propagation = Propagation::SelectedGroup;
    std::uint64_t seed = 0;
};

/// Tree-based Q-learning. `X` holds one row per line of `rewards`.
TreeItr fit_tree_qlearning(const CenteredRewards& rewards, const TreatmentGrouping& grouping,
                           const Eigen::MatrixXd& X, const QLearningOptions& options);

struct OwlOptions {
    KernelKind kernel = KernelKind::Linear;
    /// Penalty relative to the mean |reward| of each node's observations.
    double lambda = 0.1;
    ClassifierOptions classifier{};
    /// Regressor behind the null-vs-treat decision.
    RegressorSpec step0{};
    Propagation propagation = Propagation::SelectedGroup;
    std::uint64_t seed = 0;
};

/// Tree-based outcome weighted learning.
TreeItr fit_tree_owl(const CenteredRewards& rewards, const TreatmentGrouping& grouping, const Eigen::MatrixXd& X,
                     const OwlOptions& options);

/// Treatments (dataset indices) of the group recommended for `x`.
const std::vector<Index>& recommend(const TreeItr& itr, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// A single model over (features, treatment indicators) for every treatment,
/// the null group included; recommends the treatment with the highest
/// predicted reward.
struct FlatItr {
    RegressorKind kind = RegressorKind::Lasso;
    Regressor model;
    /// Dataset indices of the candidate treatments, in design-column order.
    std::vector<Index> treatments;
    std::vector<TreatmentId> labels;
    Index feature_width = 0;

    Eigen::VectorXd predicted_rewards(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    /// Dataset index of the recommended treatment; ties to the lower index.
    Index recommend_treatment(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Design row for the flat model: features, one-hot, and for the lasso the
/// feature x treatment interactions.
Eigen::RowVectorXd flat_design_row(RegressorKind kind, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                   Index treatment_slot, Index n_treatments);

FlatItr fit_off_the_shelf(const CenteredRewards& rewards, const Eigen::MatrixXd& X, const RegressorSpec& learner,
                          std::uint64_t seed);

}  // namespace pdxitr
