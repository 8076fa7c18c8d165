#pragma once

#include "pdxitr/itr.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace pdxitr {

/// Simulated annealing over the weight simplex.
struct SaConfig {
    /// Random-start chains, run in addition to one chain per vertex.
    int chains = 4;
    int iterations = 2000;
    double cooling = 0.95;
    /// Starting temperature; <= 0 picks 0.1 x the largest |vertex objective|.
    double initial_temperature = 0.0;
    /// Sd of the Gaussian proposal before projection onto the simplex.
    double step = 0.2;
    std::uint64_t seed = 0;
    int workers = 1;

    void validate() const;
};

/// Reward-scale score of a leaf group (code >= 1): the arm prediction at the
/// node whose direct child is that group, or the margin oriented toward it
/// for OWL nodes.
double latent_score(const TreeItr& itr, const Eigen::Ref<const Eigen::RowVectorXd>& x, int group_code);

/// Throws ValidationError unless all ITRs share one grouping (groups, null
/// group and node structure).
void check_common_grouping(const std::vector<TreeItr>& itrs);

/// Euclidean projection onto {w >= 0, sum w = 1}.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

/// Weighted ensemble of tree ITRs on a common grouping. At each node the arm
/// with the larger weighted latent score is taken; the null group is chosen
/// when the weighted step-0 score is not positive.
struct SuperLearner {
    std::vector<TreeItr> sub_itrs;
    Eigen::VectorXd weights;
    SaConfig sa;
    /// Feature view used by each sub-ITR (0 = screened features, 1 = latent features).
    std::vector<int> views;
    double cv_objective = 0.0;
    /// Cross-validated value of each sub-ITR alone (the simplex vertices).
    Eigen::VectorXd vertex_objectives;

    const TreatmentGrouping& grouping() const { return sub_itrs.front().grouping; }
    /// One feature row per view.
    int recommend_code(const std::vector<Eigen::RowVectorXd>& view_rows) const;
};

/// Group code recommended for `x` when every sub-ITR uses the same features.
int recommend_sl(const SuperLearner& sl, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// Held-out quantities needed to score any weight vector without refitting.
struct ScoreCache {
    std::vector<DecisionNode> nodes;
    /// Per evaluation line: step-0 score of each sub-ITR.
    std::vector<Eigen::VectorXd> step0;
    /// Per evaluation line: nodes x sub-ITRs matrix of left-minus-right latent scores.
    std::vector<Eigen::MatrixXd> node_diff;
    /// Per evaluation line: summed observed reward and mouse count by group code.
    std::vector<Eigen::VectorXd> reward_sum;
    std::vector<Eigen::VectorXd> reward_count;

    Index members() const { return step0.empty() ? 0 : step0.front().size(); }
    /// Adds one held-out line scored by fitted sub-ITRs (rows of `view_rows` per sub-ITR).
    void add_line(const std::vector<const TreeItr*>& itrs, const std::vector<Eigen::RowVectorXd>& member_rows,
                  const CenteredRewards& observed, Index line);
};

/// Group code chosen on cache line `line` by weights `w`.
int combined_code(const ScoreCache& cache, std::size_t line, const Eigen::VectorXd& w);

/// Pooled value of the combined rule: summed concordant reward over concordant mice.
double cv_objective(const ScoreCache& cache, const Eigen::VectorXd& w);

struct WeightSearch {
    Eigen::VectorXd weights;
    double objective = 0.0;
    Eigen::VectorXd vertex_objectives;
};

/// Anneals from every vertex and from `chains` random points; returns the best
/// weights visited (ties to the earlier chain).
WeightSearch anneal_weights(const ScoreCache& cache, const SaConfig& config);

/// Training data for one sub-ITR: its rewards and feature rows over the SL training lines.
struct SlMember {
    CenteredRewards rewards;
    Eigen::MatrixXd X;
    int view = 0;
};

using SubItrFitter =
    std::function<TreeItr(std::size_t member, const CenteredRewards& rewards, const Eigen::MatrixXd& X, std::uint64_t seed)>;

struct SlProblem {
    std::vector<SlMember> members;
    /// Observed centered rewards of the same lines; defines the value.
    CenteredRewards observed;
    SubItrFitter fit;
    int folds = 3;
    std::uint64_t seed = 0;
    int workers = 1;
};

/// Fits the sub-ITRs per fold, caches their held-out scores, anneals the
/// weights against the cross-validated value, and refits on all lines.
SuperLearner fit_superlearner(const SlProblem& problem, const SaConfig& config);

/// Seeded fold labels 0..k-1 for n items (shuffled, then dealt round-robin).
std::vector<int> make_folds(Index n, int k, std::uint64_t seed);

}  // namespace pdxitr
