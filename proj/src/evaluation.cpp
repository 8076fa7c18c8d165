#include "pdxitr/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace pdxitr {

bool MethodSpec::uses_lambda() const {
    if (kind == MethodKind::TreeOwl) return true;
    if (kind == MethodKind::SuperLearner) return !members.empty() && members.front().uses_lambda();
    return learner == RegressorKind::Lasso;
}

namespace {

MethodSpec base_method(const std::string& base) {
    MethodSpec s;
    s.name = base;
    if (base == "ql1-lasso" || base == "ql1-rf" || base == "ql2-lasso" || base == "ql2-rf") {
        s.kind = base.rfind("ql1", 0) == 0 ? MethodKind::TreeQL1 : MethodKind::TreeQL2;
        s.learner = base.ends_with("rf") ? RegressorKind::Forest : RegressorKind::Lasso;
    } else if (base == "owl-linear" || base == "owl-gaussian") {
        s.kind = MethodKind::TreeOwl;
        s.kernel = base == "owl-linear" ? KernelKind::Linear : KernelKind::Gaussian;
    } else if (base == "ots-lasso" || base == "ots-rf") {
        s.kind = MethodKind::OffTheShelf;
        s.learner = base == "ots-rf" ? RegressorKind::Forest : RegressorKind::Lasso;
    } else if (base == "sl4" || base == "sl6" || base == "sl8" || base == "sl16") {
        s.kind = MethodKind::SuperLearner;
        for (const char* m : {"ql1-lasso+smoothed", "ql2-lasso+smoothed", "ql1-rf+smoothed", "ql2-rf+smoothed"})
            s.members.push_back(method_from_name(m));
        if (base != "sl4")
            for (const char* m : {"ql1-rf", "ql2-rf"}) s.members.push_back(method_from_name(m));
        if (base == "sl8" || base == "sl16")
            for (const char* m : {"ql1-lasso", "ql2-lasso"}) s.members.push_back(method_from_name(m));
        if (base == "sl16") {
            const std::size_t n = s.members.size();
            for (std::size_t k = 0; k < n; ++k) s.members.push_back(method_from_name(s.members[k].name + "+dae"));
        }
    } else {
        throw ValidationError("unknown method '" + base + "'");
    }
    return s;
}

std::string format_number(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

MethodSpec method_from_name(const std::string& name) {
    std::vector<std::string> parts;
    std::stringstream ss(name);
    std::string part;
    while (std::getline(ss, part, '+')) parts.push_back(part);
    if (parts.empty() || parts[0].empty()) throw ValidationError("empty method name");
    MethodSpec s = base_method(parts[0]);
    for (std::size_t k = 1; k < parts.size(); ++k) {
        if (parts[k] == "smoothed")
            s.smoothed = true;
        else if (parts[k] == "dae")
            s.dae = true;
        else
            throw ValidationError("unknown method variant '" + parts[k] + "' in '" + name + "'");
    }
    if (s.kind == MethodKind::SuperLearner && (s.smoothed || s.dae))
        throw ValidationError("superlearner presets take no variant flags");
    s.name = name;
    return s;
}

std::string method_variant(const MethodSpec& spec) {
    std::string v;
    if (spec.smoothed) v += "smoothed";
    if (spec.dae) v += v.empty() ? "dae" : "+dae";
    return v.empty() ? "plain" : v;
}

void TuningGrid::validate() const {
    if (c1.empty() || c2.empty() || lambda.empty()) throw ValidationError("tuning grids must be non-empty");
    for (int v : c1)
        if (v < 0) throw ValidationError("c1 grid values must be >= 0");
    for (int v : c2)
        if (v < 1) throw ValidationError("c2 grid values must be >= 1");
    for (double v : lambda)
        if (!(v >= 0.0)) throw ValidationError("lambda grid values must be >= 0");
}

std::vector<TuningPoint> TuningGrid::points(const MethodSpec& spec) const {
    validate();
    const std::vector<int> c1s = spec.uses_tree() ? c1 : std::vector<int>{0};
    const std::vector<int> c2s = spec.uses_tree() ? c2 : std::vector<int>{c2.front()};
    const std::vector<double> lambdas = spec.uses_lambda() ? lambda : std::vector<double>{lambda.front()};
    std::vector<TuningPoint> out;
    for (int a : c1s)
        for (int b : c2s)
            for (double l : lambdas) out.push_back({a, b, l});
    return out;
}

namespace {

TreeItr fit_tree_member(const MethodSpec& spec, const CenteredRewards& rewards, const TreatmentGrouping& grouping,
                        const Eigen::MatrixXd& X, const TuningPoint& params, std::uint64_t seed) {
    if (spec.kind == MethodKind::TreeOwl) {
        OwlOptions o;
        o.kernel = spec.kernel;
        o.lambda = params.lambda;
        o.classifier = spec.classifier;
        o.step0 = RegressorSpec{RegressorKind::Lasso, 0.1, spec.forest};
        o.propagation = spec.propagation;
        o.seed = seed;
        return fit_tree_owl(rewards, grouping, X, o);
    }
    if (spec.kind != MethodKind::TreeQL1 && spec.kind != MethodKind::TreeQL2)
        throw ValidationError("method '" + spec.name + "' is not a tree method");
    QLearningOptions o;
    o.variant = spec.kind == MethodKind::TreeQL1 ? ItrVariant::QL1 : ItrVariant::QL2;
    o.learner = RegressorSpec{spec.learner, params.lambda, spec.forest};
    o.propagation = spec.propagation;
    o.seed = seed;
    return fit_tree_qlearning(rewards, grouping, X, o);
}

}  // namespace

FittedMethod fit_method(const MethodSpec& spec, const PdxDataset& train, const TuningPoint& params, std::uint64_t seed,
                        int workers) {
    require_valid(train);
    FittedMethod out;
    out.spec = spec;
    out.params = params;
    out.feature_names = train.features.feature_names;

    const CenteredRewards observed = standardize_and_center(train, params.c1);
    out.centering = observed.model();

    const bool is_sl = spec.kind == MethodKind::SuperLearner;
    bool need_latent = spec.dae;
    bool need_smoothed = spec.smoothed;
    for (const auto& m : spec.members) {
        need_latent = need_latent || m.dae;
        need_smoothed = need_smoothed || m.smoothed;
    }
    const Eigen::MatrixXd& X = train.features.values;
    Eigen::MatrixXd latent;
    if (need_latent) {
        TrainConfig cfg = is_sl ? spec.members.front().autoencoder : spec.autoencoder;
        for (const auto& m : spec.members)
            if (m.dae) {
                cfg = m.autoencoder;
                break;
            }
        cfg.seed = derive_seed(seed, 11);
        cfg.workers = workers;
        out.encoder = train_autoencoder(train.features, cfg);
        latent = encode(*out.encoder, X);
    }
    std::optional<CenteredRewards> smoothed;
    if (need_smoothed) {
        const ForestParams& fp = is_sl ? spec.members.front().smoothing : spec.smoothing;
        smoothed = apply_centering(out.centering, smooth_outcomes(train, derive_seed(seed, 12), fp));
    }
    auto rewards_for = [&](const MethodSpec& s) -> const CenteredRewards& { return s.smoothed ? *smoothed : observed; };
    auto view_for = [&](const MethodSpec& s) -> const Eigen::MatrixXd& { return s.dae ? latent : X; };

    if (spec.kind == MethodKind::OffTheShelf) {
        out.flat = fit_off_the_shelf(rewards_for(spec), view_for(spec), RegressorSpec{spec.learner, params.lambda, spec.forest},
                                     derive_seed(seed, 13));
        return out;
    }

    out.dendrogram = build_tree(observed);
    out.grouping = cut_tree(*out.dendrogram, params.c2, observed);

    if (!is_sl) {
        out.tree = fit_tree_member(spec, rewards_for(spec), *out.grouping, view_for(spec), params, derive_seed(seed, 14));
        out.tree->feature_names = spec.dae ? out.encoder->feature_names : out.feature_names;
        return out;
    }

    SlProblem problem;
    problem.observed = observed;
    problem.folds = spec.sl_folds;
    problem.seed = derive_seed(seed, 15);
    problem.workers = workers;
    for (const auto& m : spec.members) {
        if (m.kind == MethodKind::SuperLearner || m.kind == MethodKind::OffTheShelf)
            throw ValidationError("superlearner members must be tree methods");
        problem.members.push_back({rewards_for(m), view_for(m), m.dae ? 1 : 0});
    }
    const TreatmentGrouping& grouping = *out.grouping;
    problem.fit = [&](std::size_t m, const CenteredRewards& r, const Eigen::MatrixXd& Xm, std::uint64_t s) {
        return fit_tree_member(spec.members[m], r, grouping, Xm, params, s);
    };
    SaConfig sa = spec.sa;
    sa.seed = derive_seed(seed, 16);
    sa.workers = workers;
    out.superlearner = fit_superlearner(problem, sa);
    return out;
}

std::vector<std::vector<Index>> FittedMethod::recommend(const Eigen::MatrixXd& X) const {
    if (X.cols() != static_cast<Index>(feature_names.size()))
        throw ValidationError("expected " + std::to_string(feature_names.size()) + " features, got " +
                              std::to_string(X.cols()));
    Eigen::MatrixXd latent;
    if (encoder) latent = encode(*encoder, X);
    std::vector<std::vector<Index>> out;
    out.reserve(static_cast<std::size_t>(X.rows()));
    for (Index j = 0; j < X.rows(); ++j) {
        if (flat) {
            out.push_back({flat->recommend_treatment(spec.dae ? Eigen::RowVectorXd(latent.row(j)) : Eigen::RowVectorXd(X.row(j)))});
        } else if (tree) {
            const Eigen::RowVectorXd x = spec.dae ? Eigen::RowVectorXd(latent.row(j)) : Eigen::RowVectorXd(X.row(j));
            out.push_back(pdxitr::recommend(*tree, x));
        } else if (superlearner) {
            std::vector<Eigen::RowVectorXd> rows{X.row(j)};
            if (encoder) rows.push_back(latent.row(j));
            out.push_back(superlearner->grouping().treatments_of(superlearner->recommend_code(rows)));
        } else {
            throw ValidationError("fitted method holds no model");
        }
    }
    return out;
}

double estimate_value(const CenteredRewards& holdout, const std::vector<std::vector<Index>>& recommended) {
    if (static_cast<Index>(recommended.size()) != holdout.lines())
        throw ValidationError("one recommendation per held-out line is required");
    if (holdout.lines() == 0) throw ValidationError("empty holdout");
    double sum = 0.0;
    long count = 0;
    for (Index j = 0; j < holdout.lines(); ++j)
        for (Index t : recommended[static_cast<std::size_t>(j)]) {
            const double r = holdout.reward(t, j);
            if (!is_present(r)) continue;
            sum += r;
            ++count;
        }
    if (count == 0) throw NumericalError("no concordant mice");
    return sum / static_cast<double>(count);
}

namespace {

PdxDataset align_features(const PdxDataset& data, const std::vector<std::string>& names) {
    if (data.features.feature_names == names) return data;
    std::map<std::string, Index> col;
    for (std::size_t k = 0; k < data.features.feature_names.size(); ++k)
        col.emplace(data.features.feature_names[k], static_cast<Index>(k));
    std::vector<Index> cols;
    for (const auto& n : names) {
        auto it = col.find(n);
        if (it == col.end()) throw ValidationError("held-out data lacks feature '" + n + "'");
        cols.push_back(it->second);
    }
    return with_features(data, data.features.select_columns(cols));
}

}  // namespace

double estimate_value(const FittedMethod& fitted, const PdxDataset& holdout) {
    const PdxDataset aligned = align_features(holdout, fitted.feature_names);
    const CenteredRewards rewards = apply_centering(fitted.centering, aligned);
    return estimate_value(rewards, fitted.recommend(aligned.features.values));
}

ValueSummary summarize_values(const CenteredRewards& rewards) {
    double sum = 0.0, best_sum = 0.0;
    long count = 0, lines = 0;
    for (Index j = 0; j < rewards.lines(); ++j) {
        double best = kMissing;
        for (Index k = 0; k < rewards.R.rows(); ++k) {
            const double r = rewards.R(k, j);
            if (!is_present(r)) continue;
            sum += r;
            ++count;
            if (!is_present(best) || r > best) best = r;
        }
        if (is_present(best)) {
            best_sum += best;
            ++lines;
        }
    }
    return {count > 0 ? sum / static_cast<double>(count) : kMissing,
            lines > 0 ? best_sum / static_cast<double>(lines) : kMissing};
}

TuneResult tune(const MethodSpec& spec, const TuningGrid& grid, const PdxDataset& train, int inner_folds,
                std::uint64_t seed, int workers) {
    const MethodSpec& tuned_spec = spec.kind == MethodKind::SuperLearner ? spec.members.at(0) : spec;
    TuneResult out;
    out.points = grid.points(tuned_spec);
    out.values.assign(out.points.size(), kMissing);
    out.failures.assign(out.points.size(), "");
    if (out.points.size() == 1) {
        out.best = out.points.front();
        return out;
    }

    const Index m = train.m();
    const int k = static_cast<int>(std::min<Index>(inner_folds, m));
    const auto fold = make_folds(m, k, seed);
    std::vector<std::vector<Index>> train_idx(static_cast<std::size_t>(k)), test_idx(static_cast<std::size_t>(k));
    for (Index j = 0; j < m; ++j)
        for (int f = 0; f < k; ++f) (fold[static_cast<std::size_t>(j)] == f ? test_idx : train_idx)[static_cast<std::size_t>(f)].push_back(j);

    const std::size_t n_tasks = out.points.size() * static_cast<std::size_t>(k);
    std::vector<double> values(n_tasks, kMissing);
    std::vector<std::string> errors(n_tasks);
    parallel_for(n_tasks, workers, [&](std::size_t task) {
        const std::size_t p = task / static_cast<std::size_t>(k);
        const auto f = static_cast<std::size_t>(task % static_cast<std::size_t>(k));
        try {
            const PdxDataset inner_train = subset_lines(train, train_idx[f]);
            const PdxDataset inner_test = subset_lines(train, test_idx[f]);
            const FittedMethod fm = fit_method(tuned_spec, inner_train, out.points[p], derive_seed(seed, task), 1);
            values[task] = estimate_value(fm, inner_test);
        } catch (const std::exception& e) {
            errors[task] = e.what();
        }
    });

    std::vector<std::size_t> ok;
    for (std::size_t p = 0; p < out.points.size(); ++p) {
        double s = 0.0;
        int cnt = 0;
        std::string why;
        for (int f = 0; f < k; ++f) {
            const std::size_t task = p * static_cast<std::size_t>(k) + static_cast<std::size_t>(f);
            if (is_present(values[task])) {
                s += values[task];
                ++cnt;
            } else if (errors[task] != "no concordant mice") {
                why = errors[task];
                break;
            }
        }
        if (!why.empty() || cnt == 0) {
            out.failures[p] = why.empty() ? "no evaluable inner fold" : why;
            continue;
        }
        out.values[p] = s / cnt;
        ok.push_back(p);
    }
    if (ok.empty()) {
        std::string msg = "every tuning grid point failed:";
        for (std::size_t p = 0; p < out.points.size(); ++p)
            msg += " (c1=" + std::to_string(out.points[p].c1) + ", c2=" + std::to_string(out.points[p].c2) +
                   ", lambda=" + format_number(out.points[p].lambda) + "): " + out.failures[p] + ";";
        throw NumericalError(msg);
    }
    std::stable_sort(ok.begin(), ok.end(), [&](std::size_t a, std::size_t b) {
        const auto& pa = out.points[a];
        const auto& pb = out.points[b];
        if (out.values[a] != out.values[b]) return out.values[a] > out.values[b];
        if (pa.c2 != pb.c2) return pa.c2 < pb.c2;
        if (pa.c1 != pb.c1) return pa.c1 < pb.c1;
        return pa.lambda > pb.lambda;
    });
    out.best = out.points[ok.front()];
    out.value = out.values[ok.front()];
    return out;
}

std::vector<int> outer_folds(const PdxDataset& dataset, int k, std::uint64_t seed) {
    return make_folds(dataset.m(), k, derive_seed(seed, 1));
}

ValueReport cross_validate(const MethodSpec& spec, const PdxDataset& dataset, const CvOptions& options) {
    require_valid(dataset);
    options.grid.validate();
    if (options.inner_folds < 2) throw ValidationError("inner folds must be >= 2");
    const auto fold = outer_folds(dataset, options.folds, options.seed);

    ValueReport report;
    report.method = spec.name;
    report.variant = method_variant(spec);
    report.response = options.response;
    report.L_sup = options.L_sup;
    report.seed = options.seed;
    report.folds = options.folds;

    for (int f = 0; f < options.folds; ++f) {
        std::vector<Index> train_idx, test_idx;
        for (Index j = 0; j < dataset.m(); ++j) (fold[static_cast<std::size_t>(j)] == f ? test_idx : train_idx).push_back(j);
        PdxDataset train = subset_lines(dataset, train_idx);
        PdxDataset test = subset_lines(dataset, test_idx);
        if (options.L_sup > 0) {
            const auto ranked = rank_genes(train, options.rank_mode, options.workers);
            const auto set = select_top(ranked, options.L_sup, train.features);
            train = with_features(train, restrict_features(train.features, set));
            test = with_features(test, restrict_features(test.features, set));
        }

        FoldResult fr;
        fr.fold = f;
        fr.train_lines = static_cast<Index>(train_idx.size());
        fr.test_lines = static_cast<Index>(test_idx.size());
        const auto tuned = tune(spec, options.grid, train, options.inner_folds, derive_seed(options.seed, 100 + f),
                                options.workers);
        fr.params = tuned.best;
        const FittedMethod fitted = fit_method(spec, train, tuned.best, derive_seed(options.seed, 200 + f), options.workers);
        const CenteredRewards hold = apply_centering(fitted.centering, test);
        const auto summary = summarize_values(hold);
        fr.v_obs = summary.v_obs;
        fr.v_opt = summary.v_opt;
        try {
            fr.value = estimate_value(hold, fitted.recommend(test.features.values));
            fr.evaluated = true;
        } catch (const NumericalError& e) {
            fr.note = std::string("fold skipped: ") + e.what();
        }
        report.fold_results.push_back(fr);
    }

    double obs = 0.0, opt = 0.0;
    int n_obs = 0, n_opt = 0;
    for (const auto& fr : report.fold_results) {
        if (!fr.evaluated) continue;
        report.per_fold_values.push_back(fr.value);
        if (is_present(fr.v_obs)) {
            obs += fr.v_obs;
            ++n_obs;
        }
        if (is_present(fr.v_opt)) {
            opt += fr.v_opt;
            ++n_opt;
        }
    }
    const auto n = static_cast<double>(report.per_fold_values.size());
    if (n > 0) {
        report.v_bar = std::accumulate(report.per_fold_values.begin(), report.per_fold_values.end(), 0.0) / n;
        if (n > 1) {
            double ss = 0.0;
            for (double v : report.per_fold_values) ss += (v - report.v_bar) * (v - report.v_bar);
            report.sd = std::sqrt(ss / (n - 1.0));
        }
    }
    if (n_obs > 0) report.v_obs = obs / n_obs;
    if (n_opt > 0) report.v_opt = opt / n_opt;
    if (is_present(report.v_bar) && is_present(report.v_opt) && report.v_opt != 0.0) report.p_opt = report.v_bar / report.v_opt;
    if (is_present(report.v_bar) && is_present(report.v_obs) && report.v_obs != 0.0) report.p_obs = report.v_bar / report.v_obs;
    return report;
}

std::string report_csv_header() {
    return "method,variant,response,L_sup,folds,evaluated_folds,seed,v_bar,sd,v_obs,v_opt,p_opt,p_obs";
}

std::string report_csv_row(const ValueReport& r) {
    std::ostringstream os;
    os << r.method << ',' << r.variant << ',' << r.response << ',' << r.L_sup << ',' << r.folds << ','
       << r.per_fold_values.size() << ',' << r.seed << ',' << format_number(r.v_bar) << ',' << format_number(r.sd) << ','
       << format_number(r.v_obs) << ',' << format_number(r.v_opt) << ',' << format_number(r.p_opt) << ','
       << format_number(r.p_obs);
    return os.str();
}

void write_report_json(std::ostream& os, const std::vector<ValueReport>& reports) {
    auto num = [](double v) -> nlohmann::ordered_json { return std::isfinite(v) ? nlohmann::ordered_json(v) : nullptr; };
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
        nlohmann::ordered_json j;
        j["method"] = r.method;
        j["variant"] = r.variant;
        j["response"] = r.response;
        j["L_sup"] = r.L_sup;
        j["seed"] = r.seed;
        j["folds"] = r.folds;
        j["v_bar"] = num(r.v_bar);
        j["sd"] = num(r.sd);
        j["v_obs"] = num(r.v_obs);
        j["v_opt"] = num(r.v_opt);
        j["p_opt"] = num(r.p_opt);
        j["p_obs"] = num(r.p_obs);
        j["per_fold_values"] = nlohmann::ordered_json::array();
        for (double v : r.per_fold_values) j["per_fold_values"].push_back(num(v));
        j["fold_details"] = nlohmann::ordered_json::array();
        for (const auto& fr : r.fold_results) {
            nlohmann::ordered_json d;
            d["fold"] = fr.fold;
            d["evaluated"] = fr.evaluated;
            d["note"] = fr.note;
            d["train_lines"] = fr.train_lines;
            d["test_lines"] = fr.test_lines;
            d["c1"] = fr.params.c1;
            d["c2"] = fr.params.c2;
            d["lambda"] = fr.params.lambda;
            d["value"] = num(fr.value);
            d["v_obs"] = num(fr.v_obs);
            d["v_opt"] = num(fr.v_opt);
            j["fold_details"].push_back(std::move(d));
        }
        arr.push_back(std::move(j));
    }
    os << arr.dump(2) << '\n';
}

}  // namespace pdxitr
