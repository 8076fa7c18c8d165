#pragma once

#include "pdxitr/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace pdxitr {

struct ScreeningCriteria {
    double min_variance_quantile = 0.2;
    /// Applies to .rna features only.
    double min_mean_expression = 0.0;
    double treatment_coverage = 0.90;

    void validate() const;
};

/// Drops zero-variance features, the lowest-variance fraction given by the
/// quantile, and .rna features whose mean does not exceed the threshold.
/// Column order is preserved.
FeatureMatrix filter_features(const FeatureMatrix& features, const ScreeningCriteria& criteria);

/// Drops treatments applied in fewer than coverage * m lines. The untreated arm
/// is always kept.
PdxDataset filter_treatments(const PdxDataset& dataset, double coverage);

/// Pairwise Euclidean distances between the rows of `x`.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
pairwise_distances(const Eigen::MatrixBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    const Index n = x.rows();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> d(n, n);
    for (Index i = 0; i < n; ++i) {
        d(i, i) = Scalar(0);
        for (Index j = i + 1; j < n; ++j) {
            Scalar v = (x.row(i) - x.row(j)).norm();
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

/// a_ij - row mean - column mean + grand mean.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
double_center(const Eigen::MatrixBase<Derived>& d) {
    using Scalar = typename Derived::Scalar;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    Vec row_means = d.rowwise().mean();
    Vec col_means = d.colwise().mean().transpose();
    Scalar grand = d.mean();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = d;
    out.colwise() -= row_means;
    out.rowwise() -= col_means.transpose();
    out.array() += grand;
    return out;
}

/// Sample distance covariance (V-statistic, 1/n^2 normalization) between the
/// rows of x (n x p) and y (n x q).
template <typename DX, typename DY>
typename DX::Scalar dcov(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y) {
    using Scalar = typename DX::Scalar;
    if (x.rows() != y.rows()) throw ValidationError("dcov: x and y have different row counts");
    if (x.rows() < 2) throw ValidationError("dcov: n >= 2 required");
    if (!x.allFinite() || !y.allFinite()) throw ValidationError("dcov: inputs must be finite");
    const auto a = double_center(pairwise_distances(x));
    const auto b = double_center(pairwise_distances(y));
    const Scalar n = static_cast<Scalar>(x.rows());
    Scalar v2 = (a.array() * b.array()).sum() / (n * n);
    return v2 > Scalar(0) ? std::sqrt(v2) : Scalar(0);
}

enum class RankMode { Prognostic, Predictive, Combined };

struct GeneScore {
    std::string gene;
    double score = 0.0;
};

/// Scores each gene's block of platform features against the response of each
/// treatment (prognostic) and against response differences of each treatment
/// pair (predictive); the gene's score is the maximum. The response is
/// bivariate when every record carries a secondary response. Sorted by
/// descending score, ties by gene name.
std::vector<GeneScore> rank_genes(const PdxDataset& dataset, RankMode mode = RankMode::Combined,
                                  int workers = 1);

struct GeneFeatureSet {
    std::size_t L_sup = 0;
    std::vector<std::string> genes;
    std::vector<std::string> feature_names;
};

/// First L_sup genes of the ranking and all their platform features, in the
/// column order of `features`.
GeneFeatureSet select_top(const std::vector<GeneScore>& ranked, std::size_t L_sup,
                          const FeatureMatrix& features);

FeatureMatrix restrict_features(const FeatureMatrix& features, const GeneFeatureSet& set);

}  // namespace pdxitr
