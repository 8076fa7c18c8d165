#pragma once

#include "pdxitr/core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

namespace pdxitr {

/// h(x) = intercept + beta . x + step_height * 1{x[step_feature] > step_threshold}.
/// An empty beta means no linear part; step_feature < 0 means no step.
struct EffectFunction {
    double intercept = 0.0;
    Eigen::VectorXd beta;
    int step_feature = -1;
    double step_threshold = 0.0;
    double step_height = 0.0;

    double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    static EffectFunction constant(double c);
    static EffectFunction linear(double intercept, Eigen::VectorXd beta);
    static EffectFunction step(int feature, double threshold, double height, double intercept = 0.0);
};

using Grouping = std::vector<std::vector<Index>>;

struct SyntheticOracle {
    /// Dataset order; the untreated arm is index 0 with a zero effect.
    std::vector<TreatmentId> treatments;
    EffectFunction baseline;
    std::vector<EffectFunction> effects;
    double sigma = 0.0;
    /// Effect class of each treatment (-1 for the untreated arm).
    std::vector<int> true_class;
    Index feature_dim = 0;

    double mean_response(Index treatment, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    /// Rows x treatments table of conditional means.
    Eigen::MatrixXd mean_table(const Eigen::MatrixXd& X) const;
    /// Non-null treatments grouped by effect class, classes in first-appearance order.
    Grouping true_grouping() const;
};

struct SyntheticConfig {
    Index lines = 60;
    Index treatments = 6;  // non-null treatments
    Index features = 20;
    double sigma = 0.1;
    std::uint64_t seed = 0;
    /// Effect class of each non-null treatment; empty means one class per treatment.
    std::vector<int> class_of;
    /// Effect of each class; empty means random effects on informative features.
    std::vector<EffectFunction> class_effects;
    EffectFunction baseline{};
    /// Number of leading features used by random effects.
    Index informative = 2;
    /// Fraction of non-null (line, treatment) pairs removed at random.
    double drop_fraction = 0.0;
    /// Also emit an independent-noise companion outcome as the secondary response.
    bool secondary = true;

    void validate() const;
};

std::pair<PdxDataset, SyntheticOracle> generate(const SyntheticConfig& config);

/// mean over rows of max over groups of the group's mean conditional response.
/// `means` is rows x treatments; group entries index its columns.
double optimal_value(const Eigen::MatrixXd& means, const Grouping& grouping);

/// Exact value over a finite feature sample.
double oracle_optimal_value(const SyntheticOracle& oracle, const Grouping& grouping, const Eigen::MatrixXd& X);
/// Monte Carlo value over standard-normal feature draws.
double oracle_optimal_value(const SyntheticOracle& oracle, const Grouping& grouping, std::uint64_t seed,
                            Index draws = 10000);

/// Every set partition of `items` (Bell-number many), blocks in first-element order.
std::vector<Grouping> set_partitions(const std::vector<Index>& items);

/// True when each block of `finer` lies inside one block of `coarser`.
bool is_refinement(const Grouping& finer, const Grouping& coarser);

}  // namespace pdxitr
