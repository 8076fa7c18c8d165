#include "pdxitr/core.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <exception>
#include <sstream>
#include <thread>
#include <tuple>
#include <unordered_map>

namespace pdxitr {

FeatureMatrix FeatureMatrix::select_columns(const std::vector<Index>& cols) const {
    FeatureMatrix out;
    out.line_ids = line_ids;
    out.values.resize(values.rows(), static_cast<Index>(cols.size()));
    out.feature_names.reserve(cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
        out.values.col(static_cast<Index>(k)) = values.col(cols[k]);
        out.feature_names.push_back(feature_names[static_cast<std::size_t>(cols[k])]);
    }
    return out;
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<Index>& rows) const {
    FeatureMatrix out;
    out.feature_names = feature_names;
    out.values.resize(static_cast<Index>(rows.size()), values.cols());
    out.line_ids.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out.values.row(static_cast<Index>(k)) = values.row(rows[k]);
        out.line_ids.push_back(line_ids[static_cast<std::size_t>(rows[k])]);
    }
    return out;
}

std::optional<Index> FeatureMatrix::find_line(const std::string& line_id) const {
    auto it = std::find(line_ids.begin(), line_ids.end(), line_id);
    if (it == line_ids.end()) return std::nullopt;
    return static_cast<Index>(it - line_ids.begin());
}

std::string gene_of(const std::string& feature_name) {
    auto dot = feature_name.rfind('.');
    if (dot == std::string::npos || dot == 0) return feature_name;
    return feature_name.substr(0, dot);
}

std::string platform_of(const std::string& feature_name) {
    auto dot = feature_name.rfind('.');
    if (dot == std::string::npos || dot == 0) return {};
    return feature_name.substr(dot + 1);
}

std::optional<Index> PdxDataset::treatment_index(const std::string& label) const {
    for (std::size_t i = 0; i < treatments.size(); ++i)
        if (treatments[i].id == label) return static_cast<Index>(i);
    return std::nullopt;
}

std::optional<Index> PdxDataset::untreated_index() const {
    for (std::size_t i = 0; i < treatments.size(); ++i)
        if (treatments[i].is_untreated) return static_cast<Index>(i);
    return std::nullopt;
}

namespace {

struct Lookup {
    std::unordered_map<std::string, Index> line;
    std::unordered_map<std::string, Index> treatment;

    explicit Lookup(const PdxDataset& d) {
        for (std::size_t j = 0; j < d.features.line_ids.size(); ++j)
            line.emplace(d.features.line_ids[j], static_cast<Index>(j));
        for (std::size_t i = 0; i < d.treatments.size(); ++i)
            treatment.emplace(d.treatments[i].id, static_cast<Index>(i));
    }
};

}  // namespace

Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> PdxDataset::applied() const {
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask =
        Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(m(), P(), false);
    Lookup lookup(*this);
    for (const auto& r : records) {
        auto l = lookup.line.find(r.line_id);
        auto t = lookup.treatment.find(r.treatment.id);
        if (l != lookup.line.end() && t != lookup.treatment.end()) mask(l->second, t->second) = true;
    }
    return mask;
}

Eigen::VectorXi PdxDataset::treatments_per_line() const {
    return applied().cast<int>().rowwise().sum().matrix();
}

ResponseMatrix assemble_response_matrix(const PdxDataset& dataset, ResponseKind kind) {
    Lookup lookup(dataset);
    ResponseMatrix out{Eigen::MatrixXd::Constant(dataset.P(), dataset.m(), kMissing)};
    for (const auto& r : dataset.records) {
        auto l = lookup.line.find(r.line_id);
        auto t = lookup.treatment.find(r.treatment.id);
        if (l == lookup.line.end())
            throw ValidationError("record references unknown line '" + r.line_id + "'");
        if (t == lookup.treatment.end())
            throw ValidationError("record references unknown treatment '" + r.treatment.id + "'");
        double& cell = out.values(t->second, l->second);
        if (is_present(cell))
            throw ValidationError("duplicate record for line '" + r.line_id + "', treatment '" +
                                  r.treatment.id + "'");
        if (kind == ResponseKind::Primary) {
            cell = r.response;
        } else {
            if (!r.secondary)
                throw ValidationError("record (" + r.line_id + ", " + r.treatment.id +
                                      ") has no secondary response");
            cell = *r.secondary;
        }
    }
    return out;
}

std::vector<Violation> validate_dataset(const PdxDataset& dataset) {
    std::vector<Violation> global;
    const auto& fm = dataset.features;

    if (fm.values.rows() != static_cast<Index>(fm.line_ids.size()))
        global.push_back({"features", "row count does not match line ids"});
    if (fm.values.cols() != static_cast<Index>(fm.feature_names.size()))
        global.push_back({"features", "column count does not match feature names"});
    if (!fm.values.allFinite()) global.push_back({"features", "feature matrix has non-finite entries"});
    {
        std::set<std::string> seen;
        for (const auto& n : fm.feature_names)
            if (!seen.insert(n).second) global.push_back({"feature '" + n + "'", "duplicate feature name"});
    }
    {
        std::set<std::string> seen;
        for (const auto& n : fm.line_ids)
            if (!seen.insert(n).second) global.push_back({"line '" + n + "'", "duplicate line id"});
    }
    if (dataset.m() < 2) global.push_back({"dataset", "m >= 2 required"});
    if (dataset.P() < 2) global.push_back({"dataset", "P >= 2 required"});
    {
        auto untreated = std::count_if(dataset.treatments.begin(), dataset.treatments.end(),
                                       [](const TreatmentId& t) { return t.is_untreated; });
        if (untreated != 1)
            global.push_back({"dataset", "exactly one untreated treatment required, found " +
                                             std::to_string(untreated)});
        std::set<std::string> seen;
        for (const auto& t : dataset.treatments)
            if (!seen.insert(t.id).second)
                global.push_back({"treatment '" + t.id + "'", "duplicate treatment id"});
    }

    Lookup lookup(dataset);
    using Key = std::tuple<std::string, std::string, int>;
    std::vector<std::pair<Key, Violation>> local;
    std::set<std::pair<std::string, std::string>> pairs;
    std::set<std::string> lines_with_records;
    int seq = 0;
    for (const auto& r : dataset.records) {
        std::string loc = "record (" + r.line_id + ", " + r.treatment.id + ")";
        Key key{r.line_id, r.treatment.id, seq++};
        if (!lookup.line.count(r.line_id)) local.push_back({key, {loc, "unknown line"}});
        else lines_with_records.insert(r.line_id);
        if (!lookup.treatment.count(r.treatment.id)) local.push_back({key, {loc, "unknown treatment"}});
        if (!std::isfinite(r.response)) local.push_back({key, {loc, "non-finite response"}});
        if (r.secondary && !std::isfinite(*r.secondary))
            local.push_back({key, {loc, "non-finite secondary response"}});
        if (!pairs.insert({r.line_id, r.treatment.id}).second)
            local.push_back({key, {loc, "duplicate (line, treatment) pair"}});
    }
    for (const auto& id : fm.line_ids)
        if (!lines_with_records.count(id))
            local.push_back({Key{id, "", seq++}, {"line '" + id + "'", "line has no records"}});

    std::stable_sort(local.begin(), local.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [k, v] : local) global.push_back(std::move(v));
    return global;
}

void require_valid(const PdxDataset& dataset) {
    auto violations = validate_dataset(dataset);
    if (violations.empty()) return;
    std::ostringstream os;
    os << "invalid dataset (" << violations.size() << " violation(s)):";
    for (const auto& v : violations) os << "\n  " << v.location << ": " << v.message;
    throw ValidationError(os.str());
}

PdxDataset subset_lines(const PdxDataset& dataset, const std::vector<Index>& lines) {
    PdxDataset out;
    out.features = dataset.features.select_rows(lines);
    out.treatments = dataset.treatments;
    std::set<std::string> keep(out.features.line_ids.begin(), out.features.line_ids.end());
    for (const auto& r : dataset.records)
        if (keep.count(r.line_id)) out.records.push_back(r);
    return out;
}

PdxDataset subset_treatments(const PdxDataset& dataset, const std::vector<Index>& treatments) {
    PdxDataset out;
    out.features = dataset.features;
    std::set<std::string> keep;
    for (Index i : treatments) {
        out.treatments.push_back(dataset.treatments[static_cast<std::size_t>(i)]);
        keep.insert(out.treatments.back().id);
    }
    for (const auto& r : dataset.records)
        if (keep.count(r.treatment.id)) out.records.push_back(r);
    return out;
}

PdxDataset with_features(const PdxDataset& dataset, FeatureMatrix features) {
    if (features.line_ids != dataset.features.line_ids)
        throw ValidationError("replacement features must keep the line order");
    PdxDataset out = dataset;
    out.features = std::move(features);
    return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
    auto run = [&](std::size_t first, std::size_t stride) {
        for (std::size_t i = first; i < n; i += stride) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (n_workers <= 1) {
        run(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(run, w, n_workers);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace pdxitr
