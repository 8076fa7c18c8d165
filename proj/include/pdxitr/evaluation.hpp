#pragma once

#include "pdxitr/autoencoder.hpp"
#include "pdxitr/core.hpp"
#include "pdxitr/itr.hpp"
#include "pdxitr/screening.hpp"
#include "pdxitr/superlearner.hpp"
#include "pdxitr/treatment_tree.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pdxitr {

enum class MethodKind { TreeQL1, TreeQL2, TreeOwl, OffTheShelf, SuperLearner };

/// One estimation method with its variant flags. For superlearners,
/// `members` lists the sub-ITR methods (tree methods only).
struct MethodSpec {
    std::string name;
    MethodKind kind = MethodKind::TreeQL1;
    RegressorKind learner = RegressorKind::Lasso;
    KernelKind kernel = KernelKind::Linear;
    bool smoothed = false;
    bool dae = false;
    Propagation propagation = Propagation::SelectedGroup;
    ForestParams forest{};
    ClassifierOptions classifier{};
    ForestParams smoothing{};
    TrainConfig autoencoder{};
    std::vector<MethodSpec> members;
    SaConfig sa{};
    int sl_folds = 3;

    bool uses_tree() const { return kind != MethodKind::OffTheShelf; }
    /// Lambda matters for lasso learners and OWL.
    bool uses_lambda() const;
};

/// Method names: "ql1-lasso", "ql2-rf", "owl-linear", "owl-gaussian",
/// "ots-lasso", "ots-rf", "sl4", "sl6", "sl8", "sl16"; a "+smoothed" and/or
/// "+dae" suffix sets the variant flags.
MethodSpec method_from_name(const std::string& name);
std::string method_variant(const MethodSpec& spec);

struct TuningPoint {
    int c1 = 0;
    int c2 = 1;
    double lambda = 0.1;

    friend bool operator==(const TuningPoint&, const TuningPoint&) = default;
};

struct TuningGrid {
    std::vector<int> c1{0};
    std::vector<int> c2{1};
    std::vector<double> lambda{0.1};

    void validate() const;
    /// Grid points relevant to `spec`. Unused axes collapse to their first
    /// value; off-the-shelf methods always use c1 = 0.
    std::vector<TuningPoint> points(const MethodSpec& spec) const;
};

/// A method fitted on one training split, able to recommend for raw
/// (screened) feature rows.
struct FittedMethod {
    MethodSpec spec;
    TuningPoint params;
    std::vector<std::string> feature_names;
    CenteringModel centering;
    std::optional<Dendrogram> dendrogram;
    std::optional<TreatmentGrouping> grouping;
    std::optional<Encoder> encoder;
    std::optional<TreeItr> tree;
    std::optional<FlatItr> flat;
    std::optional<SuperLearner> superlearner;

    /// Dataset indices of the recommended treatments for each row of X.
    std::vector<std::vector<Index>> recommend(const Eigen::MatrixXd& X) const;
};

FittedMethod fit_method(const MethodSpec& spec, const PdxDataset& train, const TuningPoint& params,
                        std::uint64_t seed, int workers = 1);

/// Ratio estimator of the value over all mice: mice whose treatment is in
/// the recommended set of their line count as concordant.
double estimate_value(const CenteredRewards& holdout, const std::vector<std::vector<Index>>& recommended);

/// Value of a fitted method on held-out lines, centered with the training model.
double estimate_value(const FittedMethod& fitted, const PdxDataset& holdout);

struct ValueSummary {
    double v_obs = 0.0;
    double v_opt = 0.0;
};

/// v_obs: mean centered reward over non-null mice; v_opt: mean over lines of
/// the best observed centered reward.
ValueSummary summarize_values(const CenteredRewards& rewards);

struct TuneResult {
    TuningPoint best;
    double value = 0.0;
    std::vector<TuningPoint> points;
    /// Inner CV value per point (NaN where the point failed).
    std::vector<double> values;
    std::vector<std::string> failures;
};

TuneResult tune(const MethodSpec& spec, const TuningGrid& grid, const PdxDataset& train, int inner_folds,
                std::uint64_t seed, int workers = 1);

struct FoldResult {
    int fold = 0;
    bool evaluated = false;
    std::string note;
    TuningPoint params;
    double value = kMissing;
    double v_obs = kMissing;
    double v_opt = kMissing;
    Index train_lines = 0;
    Index test_lines = 0;
};

struct ValueReport {
    std::string method;
    std::string variant;
    std::string response;
    std::size_t L_sup = 0;  // 0 = no supervised screening
    std::uint64_t seed = 0;
    int folds = 0;
    std::vector<FoldResult> fold_results;
    std::vector<double> per_fold_values;
    double v_bar = kMissing;
    double sd = kMissing;
    double v_obs = kMissing;
    double v_opt = kMissing;
    double p_opt = kMissing;
    double p_obs = kMissing;
};

struct CvOptions {
    int folds = 5;
    int inner_folds = 3;
    TuningGrid grid{};
    std::size_t L_sup = 0;
    RankMode rank_mode = RankMode::Combined;
    std::string response = "neg_bar";
    std::uint64_t seed = 0;
    int workers = 1;
};

/// Outer K-fold CV with inner tuning on each training split. Screening,
/// centering, smoothing and the autoencoder only see training lines.
ValueReport cross_validate(const MethodSpec& spec, const PdxDataset& dataset, const CvOptions& options);

/// Per-line membership of lines in outer folds (shared by all methods for a seed).
std::vector<int> outer_folds(const PdxDataset& dataset, int k, std::uint64_t seed);

std::string report_csv_header();
std::string report_csv_row(const ValueReport& report);
void write_report_json(std::ostream& os, const std::vector<ValueReport>& reports);

}  // namespace pdxitr
