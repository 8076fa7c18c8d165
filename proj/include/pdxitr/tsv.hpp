#pragma once

#include "pdxitr/core.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace pdxitr {

/// Features TSV: header "line_id<TAB>feature..." then one row per line.
FeatureMatrix read_features_tsv(std::istream& is, const std::string& source = "features");
FeatureMatrix read_features_tsv(const std::string& path);
void write_features_tsv(std::ostream& os, const FeatureMatrix& features);

struct ResponseTable {
    std::vector<TreatmentId> treatments;  // first-appearance order
    std::vector<ResponseRecord> records;
    std::vector<std::string> warnings;
};

/// Responses TSV in either layout:
///   raw:         line_id, treatment, day, major_mm, minor_mm (one row per measurement)
///   precomputed: line_id, treatment, neg_bar, log_ttd
/// `response` ("neg_bar" or "log_ttd") becomes the primary response and the
/// other outcome the secondary one. Treatments whose label equals
/// `untreated_label` form the untreated arm. Empty or "NA" cells are missing.
ResponseTable read_responses_tsv(std::istream& is, const std::string& response,
                                 const std::string& untreated_label = "untreated",
                                 const std::string& source = "responses");
ResponseTable read_responses_tsv(const std::string& path, const std::string& response,
                                 const std::string& untreated_label = "untreated");

/// Precomputed layout; the primary response is written as neg_bar and the
/// secondary (if any) as log_ttd.
void write_responses_tsv(std::ostream& os, const PdxDataset& dataset);

/// Reads both files and assembles a validated dataset.
PdxDataset load_dataset(const std::string& features_path, const std::string& responses_path,
                        const std::string& response, const std::string& untreated_label = "untreated");

/// Writes `content` to a temporary sibling file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace pdxitr
