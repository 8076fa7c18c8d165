#include "pdxitr/learners.hpp"

#include <unordered_map>

namespace pdxitr {

PdxDataset smooth_outcomes(const PdxDataset& dataset, std::uint64_t seed, const ForestParams& params) {
    require_valid(dataset);
    const Index p = dataset.features.cols();
    const Index P = dataset.P();
    const auto n = static_cast<Index>(dataset.records.size());

    std::unordered_map<std::string, Index> line_index;
    for (Index j = 0; j < dataset.m(); ++j) line_index.emplace(dataset.features.line_ids[static_cast<std::size_t>(j)], j);

    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, p + P);
    Eigen::VectorXd y(n);
    for (Index r = 0; r < n; ++r) {
        const auto& rec = dataset.records[static_cast<std::size_t>(r)];
        design.row(r).head(p) = dataset.features.values.row(line_index.at(rec.line_id));
        design(r, p + *dataset.treatment_index(rec.treatment.id)) = 1.0;
        y(r) = rec.response;
    }

    ForestParams fp = params;
    fp.min_leaf = std::min<int>(fp.min_leaf, static_cast<int>(n));
    Forest forest = fit_random_forest(design, y, fp, seed);
    Eigen::VectorXd fitted = forest.predict(design);

    PdxDataset out = dataset;
    for (Index r = 0; r < n; ++r) out.records[static_cast<std::size_t>(r)].response = fitted(r);
    return out;
}

}  // namespace pdxitr
