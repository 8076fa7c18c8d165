#pragma once

#include "pdxitr/evaluation.hpp"
#include "pdxitr/screening.hpp"
#include "pdxitr/synthetic.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace pdxitr {

inline constexpr const char* kVersion = "1.0.0";

struct PipelineConfig {
    std::string features_path;
    std::string responses_path;
    /// Response kinds to analyse: "neg_bar" and/or "log_ttd".
    std::vector<std::string> responses{"neg_bar"};
    std::string untreated_label = "untreated";
    ScreeningCriteria screening{};
    bool prefilter = true;
    RankMode rank_mode = RankMode::Combined;
    /// 0 means no supervised screening.
    std::vector<std::size_t> L_sup{0};
    std::vector<std::string> methods{"ql1-lasso"};
    TuningGrid grid{};
    int folds = 5;
    int inner_folds = 3;
    std::uint64_t seed = 0;
    std::string out_dir = "pdxitr-out";
    ForestParams forest{};
    ForestParams smoothing{};
    ClassifierOptions classifier{};
    TrainConfig autoencoder{};
    SaConfig sa{};
    int sl_folds = 3;

    /// Relative input paths are resolved against `base_dir`.
    static PipelineConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
    static PipelineConfig from_file(const std::string& path);
    nlohmann::ordered_json to_json() const;
    void validate() const;
    /// Applies learner, smoothing, autoencoder and annealing settings to a method.
    MethodSpec method(const std::string& name) const;
};

/// Loads the data for one response kind and applies the treatment and
/// feature filters.
PdxDataset prepare_dataset(const PipelineConfig& config, const std::string& response);

/// Distinct genes among the feature names.
std::size_t gene_count(const FeatureMatrix& features);

struct CellResult {
    std::string response;
    std::string method;
    std::size_t L_sup = 0;
    ValueReport report;
    bool evaluated = false;
    bool fitted = false;
    std::string error;
    std::string model_file;
};

struct RunSummary {
    std::vector<CellResult> cells;
    std::vector<std::string> outputs;
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }
};

struct RunStages {
    bool evaluate = true;
    bool fit = true;
};

/// Runs every (response, method, L_sup) cell and writes reports, models,
/// dendrograms and a manifest under config.out_dir.
RunSummary run_pipeline(const PipelineConfig& config, int workers, RunStages stages = {});

/// Fits one method on all lines of `dataset` (screening and tuning included).
FittedMethod fit_full(const PipelineConfig& config, const MethodSpec& spec, const PdxDataset& dataset, std::size_t L_sup,
                      int workers);

std::string plot_csv_by_method(const std::vector<ValueReport>& reports);
std::string plot_csv_by_lsup(const std::vector<ValueReport>& reports);
std::vector<ValueReport> read_report_json(const std::string& text);

SyntheticConfig synthetic_from_json(const nlohmann::json& j);

}  // namespace pdxitr
