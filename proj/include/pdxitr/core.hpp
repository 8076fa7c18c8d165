#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdxitr {

using Index = Eigen::Index;

/// Raised when input data or configuration breaks a documented invariant.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a numerical routine cannot produce a result (divergence,
/// unfittable model, degenerate weights).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_present(double v) { return !std::isnan(v); }

struct TreatmentId {
    std::string id;
    bool is_untreated = false;

    friend bool operator==(const TreatmentId&, const TreatmentId&) = default;
    friend auto operator<=>(const TreatmentId&, const TreatmentId&) = default;
};

/// One mouse: a line that received one treatment. `response` is the analysis
/// outcome (-BAR or log TTD); `secondary` optionally carries the other kind so
/// screening can use the bivariate response.
struct ResponseRecord {
    std::string line_id;
    TreatmentId treatment;
    double response = 0.0;
    std::optional<double> secondary;
};

/// Lines x features. Feature names carry a platform suffix (.rna, .cn, .mut).
struct FeatureMatrix {
    std::vector<std::string> line_ids;
    std::vector<std::string> feature_names;
    Eigen::MatrixXd values;

    Index rows() const { return values.rows(); }
    Index cols() const { return values.cols(); }

    FeatureMatrix select_columns(const std::vector<Index>& cols) const;
    FeatureMatrix select_rows(const std::vector<Index>& rows) const;
    std::optional<Index> find_line(const std::string& line_id) const;
};

/// Gene part of a platform-suffixed feature name ("TP53.rna" -> "TP53").
std::string gene_of(const std::string& feature_name);
/// Platform suffix without the dot ("TP53.rna" -> "rna"); empty if none.
std::string platform_of(const std::string& feature_name);

/// Treatments x lines matrix; absent entries are NaN.
struct ResponseMatrix {
    Eigen::MatrixXd values;

    bool present(Index treatment, Index line) const { return is_present(values(treatment, line)); }
    Index treatments() const { return values.rows(); }
    Index lines() const { return values.cols(); }
};

struct PdxDataset {
    FeatureMatrix features;
    std::vector<TreatmentId> treatments;
    std::vector<ResponseRecord> records;

    Index m() const { return features.rows(); }
    Index P() const { return static_cast<Index>(treatments.size()); }

    std::optional<Index> treatment_index(const std::string& label) const;
    std::optional<Index> untreated_index() const;
    /// Lines x treatments mask of applied treatments.
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> applied() const;
    /// Number of treatments applied to each line (p_j).
    Eigen::VectorXi treatments_per_line() const;
};

struct Violation {
    std::string location;
    std::string message;
};

enum class ResponseKind { Primary, Secondary };

/// Rearranges records into a treatments x lines matrix. Throws ValidationError
/// on duplicate (line, treatment) pairs or unknown lines/treatments.
ResponseMatrix assemble_response_matrix(const PdxDataset& dataset,
                                        ResponseKind kind = ResponseKind::Primary);

/// Every invariant violation in `dataset`, ordered by (line, treatment).
std::vector<Violation> validate_dataset(const PdxDataset& dataset);

/// Throws ValidationError listing the violations if any exist.
void require_valid(const PdxDataset& dataset);

/// Restricts the dataset to the given lines (feature rows and their records).
PdxDataset subset_lines(const PdxDataset& dataset, const std::vector<Index>& lines);

/// Restricts the dataset to the given treatments, preserving their order.
PdxDataset subset_treatments(const PdxDataset& dataset, const std::vector<Index>& treatments);

/// Replaces the feature matrix, keeping records (line ids must match).
PdxDataset with_features(const PdxDataset& dataset, FeatureMatrix features);

/// Deterministic 64-bit seed derivation (splitmix64 over the pair).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Runs fn(0..n-1) on up to `workers` threads. If any call throws, the
/// exception from the lowest index is rethrown after all threads finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace pdxitr
