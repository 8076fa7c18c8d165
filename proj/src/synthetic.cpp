#include "pdxitr/synthetic.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>

namespace pdxitr {

double EffectFunction::operator()(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    double v = intercept;
    if (beta.size() > 0) {
        if (beta.size() > x.size()) throw ValidationError("effect function uses more features than available");
        v += x.head(beta.size()).dot(beta.transpose());
    }
    if (step_feature >= 0) {
        if (step_feature >= x.size()) throw ValidationError("effect step feature out of range");
        if (x(step_feature) > step_threshold) v += step_height;
    }
    return v;
}

EffectFunction EffectFunction::constant(double c) {
    EffectFunction f;
    f.intercept = c;
    return f;
}

EffectFunction EffectFunction::linear(double intercept, Eigen::VectorXd beta) {
    EffectFunction f;
    f.intercept = intercept;
    f.beta = std::move(beta);
    return f;
}

EffectFunction EffectFunction::step(int feature, double threshold, double height, double intercept) {
    EffectFunction f;
    f.intercept = intercept;
    f.step_feature = feature;
    f.step_threshold = threshold;
    f.step_height = height;
    return f;
}

double SyntheticOracle::mean_response(Index treatment, const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return baseline(x) + effects.at(static_cast<std::size_t>(treatment))(x);
}

Eigen::MatrixXd SyntheticOracle::mean_table(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd out(X.rows(), static_cast<Index>(effects.size()));
    for (Index r = 0; r < X.rows(); ++r)
        for (Index t = 0; t < out.cols(); ++t) out(r, t) = mean_response(t, X.row(r));
    return out;
}

Grouping SyntheticOracle::true_grouping() const {
    Grouping out;
    std::map<int, std::size_t> slot;
    for (std::size_t t = 0; t < true_class.size(); ++t) {
        if (true_class[t] < 0) continue;
        auto [it, inserted] = slot.emplace(true_class[t], out.size());
        if (inserted) out.emplace_back();
        out[it->second].push_back(static_cast<Index>(t));
    }
    return out;
}

void SyntheticConfig::validate() const {
    if (lines < 2 || treatments < 2 || features < 2)
        throw ValidationError("synthetic data needs lines, treatments and features >= 2");
    if (!(sigma >= 0.0)) throw ValidationError("noise sd must be >= 0");
    if (!class_of.empty() && static_cast<Index>(class_of.size()) != treatments)
        throw ValidationError("class_of must list one class per treatment");
    const int classes = class_of.empty() ? static_cast<int>(treatments)
                                         : *std::max_element(class_of.begin(), class_of.end()) + 1;
    for (int c : class_of)
        if (c < 0) throw ValidationError("effect classes must be >= 0");
    if (!class_effects.empty() && static_cast<int>(class_effects.size()) < classes)
        throw ValidationError("class_effects must cover every class");
    if (informative < 1 || informative > features) throw ValidationError("informative features out of range");
    if (!(drop_fraction >= 0.0 && drop_fraction < 1.0)) throw ValidationError("drop fraction must be in [0, 1)");
}

std::pair<PdxDataset, SyntheticOracle> generate(const SyntheticConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    PdxDataset data;
    SyntheticOracle oracle;
    oracle.sigma = config.sigma;
    oracle.feature_dim = config.features;
    oracle.baseline = config.baseline;

    data.features.values.resize(config.lines, config.features);
    for (Index j = 0; j < config.lines; ++j) {
        data.features.line_ids.push_back("L" + std::to_string(j + 1));
        for (Index k = 0; k < config.features; ++k) data.features.values(j, k) = normal(rng);
    }
    for (Index k = 0; k < config.features; ++k) data.features.feature_names.push_back("G" + std::to_string(k + 1) + ".cn");

    std::vector<int> class_of = config.class_of;
    if (class_of.empty())
        for (Index t = 0; t < config.treatments; ++t) class_of.push_back(static_cast<int>(t));
    const int classes = *std::max_element(class_of.begin(), class_of.end()) + 1;
    std::vector<EffectFunction> class_effects = config.class_effects;
    if (class_effects.empty()) {
        for (int c = 0; c < classes; ++c) {
            if (unif(rng) < 0.5) {
                Eigen::VectorXd beta(config.informative);
                for (Index k = 0; k < beta.size(); ++k) beta(k) = normal(rng);
                class_effects.push_back(EffectFunction::linear(0.5 * normal(rng), beta));
            } else {
                const int f = static_cast<int>(std::uniform_int_distribution<Index>(0, config.informative - 1)(rng));
                class_effects.push_back(EffectFunction::step(f, 0.5 * normal(rng), 2.0 * normal(rng), 0.5 * normal(rng)));
            }
        }
    }

    data.treatments.push_back({"untreated", true});
    oracle.treatments.push_back(data.treatments.back());
    oracle.effects.push_back(EffectFunction::constant(0.0));
    oracle.true_class.push_back(-1);
    for (Index t = 0; t < config.treatments; ++t) {
        data.treatments.push_back({"T" + std::to_string(t + 1), false});
        oracle.treatments.push_back(data.treatments.back());
        oracle.effects.push_back(class_effects[static_cast<std::size_t>(class_of[static_cast<std::size_t>(t)])]);
        oracle.true_class.push_back(class_of[static_cast<std::size_t>(t)]);
    }

    for (Index j = 0; j < config.lines; ++j) {
        const auto x = data.features.values.row(j);
        for (Index t = 0; t < static_cast<Index>(data.treatments.size()); ++t) {
            const double eps = config.sigma * normal(rng);
            const double eps2 = config.sigma * normal(rng);
            const double drop = unif(rng);
            if (t > 0 && drop < config.drop_fraction) continue;
            const double mu = oracle.mean_response(t, x);
            ResponseRecord rec{data.features.line_ids[static_cast<std::size_t>(j)],
                               data.treatments[static_cast<std::size_t>(t)], mu + eps, std::nullopt};
            if (config.secondary) rec.secondary = mu + eps2;
            data.records.push_back(std::move(rec));
        }
    }
    return {std::move(data), std::move(oracle)};
}

double optimal_value(const Eigen::MatrixXd& means, const Grouping& grouping) {
    if (grouping.empty()) throw ValidationError("grouping has no groups");
    for (const auto& g : grouping) {
        if (g.empty()) throw ValidationError("empty group");
        for (Index t : g)
            if (t < 0 || t >= means.cols()) throw ValidationError("group refers to an unknown treatment");
    }
    if (means.rows() == 0) throw ValidationError("no feature rows");
    double total = 0.0;
    for (Index r = 0; r < means.rows(); ++r) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& g : grouping) {
            double s = 0.0;
            for (Index t : g) s += means(r, t);
            best = std::max(best, s / static_cast<double>(g.size()));
        }
        total += best;
    }
    return total / static_cast<double>(means.rows());
}

namespace {

void require_partition_of_active(const SyntheticOracle& oracle, const Grouping& grouping) {
    std::set<Index> seen;
    for (const auto& g : grouping) {
        if (g.empty()) throw ValidationError("empty group");
        for (Index t : g) {
            if (t < 0 || t >= static_cast<Index>(oracle.effects.size()))
                throw ValidationError("group refers to an unknown treatment");
            if (oracle.treatments[static_cast<std::size_t>(t)].is_untreated)
                throw ValidationError("grouping must not contain the untreated arm");
            if (!seen.insert(t).second) throw ValidationError("treatment appears in two groups");
        }
    }
    if (seen.size() + 1 != oracle.effects.size()) throw ValidationError("grouping does not cover every treatment");
}

}  // namespace

double oracle_optimal_value(const SyntheticOracle& oracle, const Grouping& grouping, const Eigen::MatrixXd& X) {
    require_partition_of_active(oracle, grouping);
    return optimal_value(oracle.mean_table(X), grouping);
}

double oracle_optimal_value(const SyntheticOracle& oracle, const Grouping& grouping, std::uint64_t seed, Index draws) {
    if (draws < 1) throw ValidationError("need at least one Monte Carlo draw");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd X(draws, oracle.feature_dim);
    for (Index r = 0; r < draws; ++r)
        for (Index k = 0; k < X.cols(); ++k) X(r, k) = normal(rng);
    return oracle_optimal_value(oracle, grouping, X);
}

std::vector<Grouping> set_partitions(const std::vector<Index>& items) {
    std::vector<Grouping> out;
    Grouping current;
    std::function<void(std::size_t)> rec = [&](std::size_t k) {
        if (k == items.size()) {
            out.push_back(current);
            return;
        }
        for (std::size_t b = 0; b < current.size(); ++b) {
            current[b].push_back(items[k]);
            rec(k + 1);
            current[b].pop_back();
        }
        current.push_back({items[k]});
        rec(k + 1);
        current.pop_back();
    };
    rec(0);
    return out;
}

bool is_refinement(const Grouping& finer, const Grouping& coarser) {
    std::map<Index, std::size_t> block_of;
    for (std::size_t b = 0; b < coarser.size(); ++b)
        for (Index t : coarser[b]) block_of[t] = b;
    for (const auto& g : finer) {
        if (g.empty()) return false;
        auto first = block_of.find(g.front());
        if (first == block_of.end()) return false;
        for (Index t : g) {
            auto it = block_of.find(t);
            if (it == block_of.end() || it->second != first->second) return false;
        }
    }
    return true;
}

}  // namespace pdxitr
