#pragma once

#include "pdxitr/core.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace pdxitr {

/// What is needed to center new lines the same way as the training lines:
/// the null group and the per-treatment scales.
struct CenteringModel {
    std::vector<TreatmentId> treatments;
    std::vector<Index> null_group;
    Eigen::VectorXd scale;
    int c1 = 0;
};

/// Standardized responses centered on the null-group mean of each line.
/// Treatment indices refer to `treatments` (the dataset order).
struct CenteredRewards {
    std::vector<TreatmentId> treatments;
    std::vector<std::string> line_ids;
    /// Non-null treatments; row k of R belongs to active[k].
    std::vector<Index> active;
    /// Untreated arm first, then its c1 nearest neighbours by distance.
    std::vector<Index> null_group;
    Eigen::MatrixXd R;       // |active| x m, NaN where not applied
    Eigen::MatrixXd null_R;  // |null_group| x m, null members centered by their own mean
    Eigen::VectorXd null_mean;
    Eigen::VectorXd scale;  // per dataset treatment
    int c1 = 0;

    Index lines() const { return R.cols(); }
    /// Centered reward of a dataset treatment on a line (NaN if absent).
    double reward(Index treatment, Index line) const;
    bool is_null(Index treatment) const;
    CenteringModel model() const;
};

/// Scales each treatment's response vector to unit sample sd, forms the null
/// group from the untreated arm and its c1 nearest treatments, and subtracts
/// the per-line null-group mean.
CenteredRewards standardize_and_center(const PdxDataset& dataset, int c1);

/// Centers `dataset` with a previously fitted model (e.g. held-out lines).
CenteredRewards apply_centering(const CenteringModel& model, const PdxDataset& dataset);

/// Restricts rewards to a subset of lines (columns), keeping the centering.
CenteredRewards select_lines(const CenteredRewards& rewards, const std::vector<Index>& lines);

/// Euclidean distance between two rows that may contain NaN. Uses the columns
/// present in both and rescales by sqrt(total / shared), so it equals the plain
/// distance when both rows are complete. Throws if nothing is shared.
double masked_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b);

struct Merge {
    Index left = 0;   // node ids: leaves 0..n-1, merge k is node n + k
    Index right = 0;
    double height = 0.0;
    Index size = 0;
};

struct Dendrogram {
    /// Dataset treatment index of every leaf.
    std::vector<Index> leaf_treatments;
    std::vector<std::string> labels;
    std::vector<Merge> merges;

    Index leaves() const { return static_cast<Index>(leaf_treatments.size()); }
};

/// Average-linkage agglomerative clustering of the rows of `rows` under
/// masked_distance. Ties go to the pair with the smallest leaf indices.
Dendrogram cluster_rows(const Eigen::MatrixXd& rows, std::vector<Index> leaf_treatments,
                        std::vector<std::string> labels);

/// Clusters the centered reward vectors of the non-null treatments.
Dendrogram build_tree(const CenteredRewards& rewards);

struct ChildRef {
    bool is_group = false;
    int index = 0;  // group index or decision-node index
};

struct DecisionNode {
    Index merge = 0;
    ChildRef left;
    ChildRef right;
    std::vector<int> left_groups;
    std::vector<int> right_groups;
};

struct TreatmentGrouping {
    /// Leaf groups A_1..A_{c2+1} as dataset treatment indices, in left-to-right order.
    std::vector<std::vector<Index>> groups;
    std::vector<Index> null_group;
    /// Decision nodes above the cut, root first; children appear after parents.
    std::vector<DecisionNode> internal_nodes;
    std::vector<TreatmentId> treatments;
    int c1 = 0;
    int c2 = 0;

    int group_count() const { return static_cast<int>(groups.size()); }
    /// Group containing a dataset treatment: 0 for the null group, g + 1 for groups[g], -1 if unknown.
    int group_code_of(Index treatment) const;
    /// Treatments recommended by a group code (0 = null group).
    const std::vector<Index>& treatments_of(int code) const;
};

/// Undoes the top c2 merges, giving c2 + 1 groups.
TreatmentGrouping cut_tree(const Dendrogram& dendrogram, int c2);

/// Attaches the null group and treatment labels of `rewards` to a cut.
TreatmentGrouping cut_tree(const Dendrogram& dendrogram, int c2, const CenteredRewards& rewards);

/// (c2+1) x m matrix of mean centered reward per group and line (NaN if the
/// line received none of the group's treatments).
Eigen::MatrixXd group_rewards(const CenteredRewards& rewards, const TreatmentGrouping& grouping);

/// Mean centered reward of one set of treatments on one line.
double mean_reward(const CenteredRewards& rewards, const std::vector<Index>& treatments, Index line);

/// Text merge list: leaf labels, merge pairs and heights.
void write_dendrogram(std::ostream& os, const Dendrogram& dendrogram);
Dendrogram read_dendrogram(std::istream& is);

}  // namespace pdxitr
