#include "pdxitr/screening.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

namespace pdxitr {

void ScreeningCriteria::validate() const {
    if (!(min_variance_quantile >= 0.0 && min_variance_quantile < 1.0))
        throw ValidationError("min_variance_quantile must lie in [0, 1)");
    if (!(treatment_coverage >= 0.0 && treatment_coverage <= 1.0))
        throw ValidationError("treatment_coverage must lie in [0, 1]");
    if (std::isnan(min_mean_expression)) throw ValidationError("min_mean_expression is NaN");
}

FeatureMatrix filter_features(const FeatureMatrix& features, const ScreeningCriteria& criteria) {
    criteria.validate();
    const Index p = features.cols();
    const Index n = features.rows();
    if (n < 2) throw ValidationError("filter_features: at least two lines required");

    std::vector<double> variance(static_cast<std::size_t>(p));
    for (Index k = 0; k < p; ++k) {
        auto col = features.values.col(k);
        variance[static_cast<std::size_t>(k)] =
            (col.array() - col.mean()).square().sum() / static_cast<double>(n - 1);
    }

    std::vector<Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return variance[static_cast<std::size_t>(a)] < variance[static_cast<std::size_t>(b)];
    });
    const auto n_drop = static_cast<std::size_t>(std::floor(criteria.min_variance_quantile * static_cast<double>(p)));
    std::vector<bool> keep(static_cast<std::size_t>(p), true);
    for (std::size_t k = 0; k < n_drop; ++k) keep[static_cast<std::size_t>(order[k])] = false;

    std::vector<Index> kept;
    for (Index k = 0; k < p; ++k) {
        auto col = features.values.col(k);
        if (!keep[static_cast<std::size_t>(k)]) continue;
        if (col.maxCoeff() == col.minCoeff()) continue;
        if (platform_of(features.feature_names[static_cast<std::size_t>(k)]) == "rna" &&
            !(col.mean() > criteria.min_mean_expression))
            continue;
        kept.push_back(k);
    }
    if (kept.empty()) throw ValidationError("empty feature set after filtering");
    return features.select_columns(kept);
}

PdxDataset filter_treatments(const PdxDataset& dataset, double coverage) {
    if (!(coverage >= 0.0 && coverage <= 1.0)) throw ValidationError("coverage must lie in [0, 1]");
    auto mask = dataset.applied();
    const double needed = coverage * static_cast<double>(dataset.m());
    std::vector<Index> kept;
    for (Index i = 0; i < dataset.P(); ++i) {
        const double count = mask.col(i).count();
        if (dataset.treatments[static_cast<std::size_t>(i)].is_untreated || count + 1e-9 >= needed)
            kept.push_back(i);
    }
    if (kept.size() < 2) throw ValidationError("fewer than 2 treatments remain after coverage filter");
    return subset_treatments(dataset, kept);
}

namespace {

// One response target: the lines it is defined on and its double-centered
// distance matrix.
struct Target {
    std::vector<Index> lines;
    Eigen::MatrixXd centered;
};

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, const std::vector<Index>& rows) {
    Eigen::MatrixXd out(static_cast<Index>(rows.size()), x.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = x.row(rows[k]);
    return out;
}

}  // namespace

std::vector<GeneScore> rank_genes(const PdxDataset& dataset, RankMode mode, int workers) {
    const auto primary = assemble_response_matrix(dataset, ResponseKind::Primary);
    const bool bivariate =
        !dataset.records.empty() &&
        std::all_of(dataset.records.begin(), dataset.records.end(),
                    [](const ResponseRecord& r) { return r.secondary.has_value(); });
    ResponseMatrix secondary;
    if (bivariate) secondary = assemble_response_matrix(dataset, ResponseKind::Secondary);
    const Index q = bivariate ? 2 : 1;
    const Index P = dataset.P();
    const Index m = dataset.m();

    auto response_row = [&](Index i, Index j) {
        Eigen::RowVectorXd r(q);
        r(0) = primary.values(i, j);
        if (bivariate) r(1) = secondary.values(i, j);
        return r;
    };

    std::vector<Target> targets;
    auto add_target = [&](std::vector<Index> lines, const Eigen::MatrixXd& y) {
        if (lines.size() < 2) return;
        targets.push_back({std::move(lines), double_center(pairwise_distances(y))});
    };
    if (mode != RankMode::Predictive) {
        for (Index i = 0; i < P; ++i) {
            std::vector<Index> lines;
            for (Index j = 0; j < m; ++j)
                if (primary.present(i, j)) lines.push_back(j);
            Eigen::MatrixXd y(static_cast<Index>(lines.size()), q);
            for (std::size_t k = 0; k < lines.size(); ++k) y.row(static_cast<Index>(k)) = response_row(i, lines[k]);
            add_target(std::move(lines), y);
        }
    }
    if (mode != RankMode::Prognostic) {
        for (Index i = 0; i < P; ++i)
            for (Index i2 = i + 1; i2 < P; ++i2) {
                std::vector<Index> lines;
                for (Index j = 0; j < m; ++j)
                    if (primary.present(i, j) && primary.present(i2, j)) lines.push_back(j);
                Eigen::MatrixXd y(static_cast<Index>(lines.size()), q);
                for (std::size_t k = 0; k < lines.size(); ++k)
                    y.row(static_cast<Index>(k)) = response_row(i, lines[k]) - response_row(i2, lines[k]);
                add_target(std::move(lines), y);
            }
    }
    if (targets.empty()) throw ValidationError("rank_genes: no treatment or pair has two complete lines");

    std::vector<std::string> genes;
    std::map<std::string, std::vector<Index>> columns;
    for (Index k = 0; k < dataset.features.cols(); ++k) {
        auto g = gene_of(dataset.features.feature_names[static_cast<std::size_t>(k)]);
        auto [it, inserted] = columns.try_emplace(g);
        if (inserted) genes.push_back(g);
        it->second.push_back(k);
    }

    std::vector<GeneScore> scores(genes.size());
    auto score_gene = [&](std::size_t g) {
        const auto& cols = columns.at(genes[g]);
        Eigen::MatrixXd block(m, static_cast<Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) block.col(static_cast<Index>(k)) = dataset.features.values.col(cols[k]);
        std::map<std::vector<Index>, Eigen::MatrixXd> cache;
        double best = 0.0;
        for (const auto& t : targets) {
            auto it = cache.find(t.lines);
            if (it == cache.end())
                it = cache.emplace(t.lines, double_center(pairwise_distances(gather_rows(block, t.lines)))).first;
            const double n = static_cast<double>(t.lines.size());
            const double v2 = (it->second.array() * t.centered.array()).sum() / (n * n);
            best = std::max(best, v2 > 0.0 ? std::sqrt(v2) : 0.0);
        }
        scores[g] = {genes[g], best};
    };

    parallel_for(genes.size(), workers, score_gene);

    std::stable_sort(scores.begin(), scores.end(), [](const GeneScore& a, const GeneScore& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.gene < b.gene;
    });
    return scores;
}

GeneFeatureSet select_top(const std::vector<GeneScore>& ranked, std::size_t L_sup,
                          const FeatureMatrix& features) {
    if (L_sup > ranked.size())
        throw ValidationError("L_sup = " + std::to_string(L_sup) + " exceeds the " +
                              std::to_string(ranked.size()) + " available genes");
    GeneFeatureSet out;
    out.L_sup = L_sup;
    std::set<std::string> chosen;
    for (std::size_t k = 0; k < L_sup; ++k) {
        out.genes.push_back(ranked[k].gene);
        chosen.insert(ranked[k].gene);
    }
    for (const auto& name : features.feature_names)
        if (chosen.count(gene_of(name))) out.feature_names.push_back(name);
    return out;
}

FeatureMatrix restrict_features(const FeatureMatrix& features, const GeneFeatureSet& set) {
    std::vector<Index> cols;
    std::set<std::string> wanted(set.feature_names.begin(), set.feature_names.end());
    for (Index k = 0; k < features.cols(); ++k)
        if (wanted.count(features.feature_names[static_cast<std::size_t>(k)])) cols.push_back(k);
    if (cols.size() != wanted.size()) throw ValidationError("feature set references unknown features");
    return features.select_columns(cols);
}

}  // namespace pdxitr
