#pragma once

#include "pdxitr/core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pdxitr {

// ---------------------------------------------------------------------------
// Penalized linear regression
// ---------------------------------------------------------------------------

/// Linear predictor on the original feature scale. The L1 penalty was applied
/// to the coefficients of the standardized columns.
struct LinearModel {
    double intercept = 0.0;
    Eigen::VectorXd coefficients;
    double lambda = 0.0;
    std::vector<std::string> feature_names;

    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
    double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct LassoOptions {
    /// Largest standardized coefficient change allowed at convergence.
    double coefficient_tolerance = 1e-10;
    int max_sweeps = 100000;
};

struct LassoFit {
    LinearModel model;
    /// Objective after every full coordinate sweep.
    std::vector<double> objective_per_sweep;
    double lambda_max = 0.0;
    int sweeps = 0;
};

/// Smallest lambda at which every coefficient is zero: max_j |z_j'(y - ybar)| / n
/// over standardized columns z_j (1/n variance).
double lasso_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// Minimizes (1/2n)||y - b0 - Z beta||^2 + lambda ||beta||_1 by cyclic
/// coordinate descent on standardized columns Z; the intercept is unpenalized.
LassoFit fit_lasso_traced(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                          const LassoOptions& options = {});

LinearModel fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                      const LassoOptions& options = {});

/// The objective minimized by fit_lasso, evaluated for `model` on (X, y).
double lasso_objective(const LinearModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// ---------------------------------------------------------------------------
// Random forest regression
// ---------------------------------------------------------------------------

struct ForestParams {
    int n_trees = 100;
    int min_leaf = 5;
    /// Negative means unlimited depth; 0 gives single-leaf trees.
    int max_depth = -1;
    /// Fraction of features tried at each split (at least one).
    double feature_fraction = 1.0 / 3.0;
    bool bootstrap = true;
};

struct RegressionTree {
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;
    };
    std::vector<Node> nodes;

    double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct Forest {
    std::vector<RegressionTree> trees;
    ForestParams params;
    std::uint64_t seed = 0;
    Index n_features = 0;

    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
    double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Bagged variance-reduction trees; deterministic given the seed.
Forest fit_random_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reward-weighted hinge-loss classification (outcome weighted learning)
// ---------------------------------------------------------------------------

enum class KernelKind { Linear, Gaussian };

/// f(x) = w'x + b (linear) or sum_i coef_i K(z_i, z) + b (Gaussian), where z is
/// x standardized with the stored column means and scales.
struct DecisionFunction {
    KernelKind kind = KernelKind::Linear;
    double lambda = 0.0;
    double bias = 0.0;
    Eigen::RowVectorXd center;
    Eigen::RowVectorXd scale;
    /// Linear form: weights on the standardized inputs.
    Eigen::VectorXd weights;
    /// Gaussian form: standardized support points and their coefficients.
    Eigen::MatrixXd support;
    Eigen::VectorXd coef;
    double bandwidth = 1.0;
    /// J(f): ||w||^2 for the linear form, the RKHS norm for the kernel form.
    double penalty = 0.0;

    Index input_width() const { return center.size(); }
    double value(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    Eigen::VectorXd values(const Eigen::MatrixXd& X) const;
    /// +1 or -1; f(x) = 0 maps to +1.
    int sign(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct ClassifierOptions {
    /// Relative duality-gap tolerance on the objective.
    double tolerance = 1e-6;
    int max_iterations = 200000;
    /// Gaussian bandwidth; defaults to the median pairwise distance.
    std::optional<double> bandwidth;
};

struct ClassifierFit {
    DecisionFunction function;
    /// Objective of the primal iterate after each solver step.
    std::vector<double> objective_trace;
    double duality_gap = 0.0;
    int iterations = 0;
};

/// Minimizes E_n(|R| [I(R>=0)(1 - A f(X))_+ + I(R<0)(1 + A f(X))_+]) + lambda J(f)
/// with labels A in {-1, +1}. Solved through the dual of the equivalent
/// weighted SVM; the reported primal iterate is the best one seen, so the
/// trace never increases.
ClassifierFit fit_weighted_classifier_traced(const Eigen::MatrixXd& X, const Eigen::VectorXi& labels,
                                             const Eigen::VectorXd& rewards, KernelKind kind, double lambda,
                                             const ClassifierOptions& options = {});

DecisionFunction fit_weighted_classifier(const Eigen::MatrixXd& X, const Eigen::VectorXi& labels,
                                         const Eigen::VectorXd& rewards, KernelKind kind, double lambda,
                                         const ClassifierOptions& options = {});

/// Weighted hinge objective of `f` on the data (the quantity minimized above).
double weighted_hinge_objective(const DecisionFunction& f, const Eigen::MatrixXd& X,
                                const Eigen::VectorXi& labels, const Eigen::VectorXd& rewards);

/// Median Euclidean distance between distinct rows (1.0 when degenerate).
double median_pairwise_distance(const Eigen::MatrixXd& X);

// ---------------------------------------------------------------------------
// Outcome smoothing
// ---------------------------------------------------------------------------

/// Replaces every observed primary response with the in-sample prediction of a
/// random forest fit on (line features, treatment one-hot).
PdxDataset smooth_outcomes(const PdxDataset& dataset, std::uint64_t seed, const ForestParams& params = {});

}  // namespace pdxitr
