#include "pdxitr/pipeline.hpp"

#include "pdxitr/serialization.hpp"
#include "pdxitr/tsv.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace pdxitr {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ValidationError(where + ": unknown key '" + k + "'");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError("config key '" + key + "': " + e.what());
    }
}

ForestParams forest_from_json(const json& j, ForestParams p, const std::string& where) {
    check_keys(j, where, {"n_trees", "min_leaf", "max_depth", "feature_fraction", "bootstrap"});
    p.n_trees = get_or(j, "n_trees", p.n_trees);
    p.min_leaf = get_or(j, "min_leaf", p.min_leaf);
    p.max_depth = get_or(j, "max_depth", p.max_depth);
    p.feature_fraction = get_or(j, "feature_fraction", p.feature_fraction);
    p.bootstrap = get_or(j, "bootstrap", p.bootstrap);
    return p;
}

ojson forest_to_json(const ForestParams& p) {
    ojson j;
    j["n_trees"] = p.n_trees;
    j["min_leaf"] = p.min_leaf;
    j["max_depth"] = p.max_depth;
    j["feature_fraction"] = p.feature_fraction;
    j["bootstrap"] = p.bootstrap;
    return j;
}

std::string rank_mode_name(RankMode m) {
    switch (m) {
        case RankMode::Prognostic: return "prognostic";
        case RankMode::Predictive: return "predictive";
        case RankMode::Combined: return "combined";
    }
    return "combined";
}

std::string resolve(const std::string& base, const std::string& p) {
    if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (std::filesystem::path(base) / p).lexically_normal().string();
}

std::string fmt(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string cell_id(const std::string& response, const std::string& method, std::size_t L_sup) {
    std::string m = method;
    std::replace(m.begin(), m.end(), '+', '_');
    return response + "_" + m + "_L" + std::to_string(L_sup);
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const std::string& base_dir) {
    check_keys(j, "config", {"features", "responses", "response", "untreated_label", "screening", "L_sup", "methods",
                             "c1", "c2", "lambda", "folds", "inner_folds", "seed", "out", "forest", "smoothing",
                             "classifier", "autoencoder", "annealing", "sl_folds"});
    PipelineConfig c;
    c.features_path = resolve(base_dir, get_or<std::string>(j, "features", ""));
    c.responses_path = resolve(base_dir, get_or<std::string>(j, "responses", ""));
    if (j.contains("response")) {
        if (j["response"].is_string())
            c.responses = {j["response"].get<std::string>()};
        else
            c.responses = get_or<std::vector<std::string>>(j, "response", c.responses);
    }
    c.untreated_label = get_or(j, "untreated_label", c.untreated_label);
    if (j.contains("screening")) {
        const auto& s = j["screening"];
        check_keys(s, "screening", {"min_variance_quantile", "min_mean_expression", "treatment_coverage", "rank_mode", "prefilter"});
        c.screening.min_variance_quantile = get_or(s, "min_variance_quantile", c.screening.min_variance_quantile);
        c.screening.min_mean_expression = get_or(s, "min_mean_expression", c.screening.min_mean_expression);
        c.screening.treatment_coverage = get_or(s, "treatment_coverage", c.screening.treatment_coverage);
        c.prefilter = get_or(s, "prefilter", c.prefilter);
        const auto mode = get_or<std::string>(s, "rank_mode", "combined");
        if (mode == "prognostic")
            c.rank_mode = RankMode::Prognostic;
        else if (mode == "predictive")
            c.rank_mode = RankMode::Predictive;
        else if (mode == "combined")
            c.rank_mode = RankMode::Combined;
        else
            throw ValidationError("screening.rank_mode must be prognostic, predictive or combined");
    }
    c.L_sup = get_or(j, "L_sup", c.L_sup);
    c.methods = get_or(j, "methods", c.methods);
    c.grid.c1 = get_or(j, "c1", c.grid.c1);
    c.grid.c2 = get_or(j, "c2", c.grid.c2);
    c.grid.lambda = get_or(j, "lambda", c.grid.lambda);
    c.folds = get_or(j, "folds", c.folds);
    c.inner_folds = get_or(j, "inner_folds", c.inner_folds);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.out_dir = get_or(j, "out", c.out_dir);
    if (j.contains("forest")) c.forest = forest_from_json(j["forest"], c.forest, "forest");
    if (j.contains("smoothing")) c.smoothing = forest_from_json(j["smoothing"], c.smoothing, "smoothing");
    if (j.contains("classifier")) {
        const auto& s = j["classifier"];
        check_keys(s, "classifier", {"tolerance", "max_iterations", "bandwidth"});
        c.classifier.tolerance = get_or(s, "tolerance", c.classifier.tolerance);
        c.classifier.max_iterations = get_or(s, "max_iterations", c.classifier.max_iterations);
        if (s.contains("bandwidth")) c.classifier.bandwidth = s["bandwidth"].get<double>();
    }
    if (j.contains("autoencoder")) {
        const auto& s = j["autoencoder"];
        check_keys(s, "autoencoder", {"epochs", "learning_rate", "batch_size", "bottleneck_grid", "cv_folds", "hidden_width"});
        c.autoencoder.epochs = get_or(s, "epochs", c.autoencoder.epochs);
        c.autoencoder.learning_rate = get_or(s, "learning_rate", c.autoencoder.learning_rate);
        c.autoencoder.batch_size = get_or(s, "batch_size", c.autoencoder.batch_size);
        c.autoencoder.bottleneck_grid = get_or(s, "bottleneck_grid", c.autoencoder.bottleneck_grid);
        c.autoencoder.cv_folds = get_or(s, "cv_folds", c.autoencoder.cv_folds);
        c.autoencoder.hidden_width = get_or(s, "hidden_width", c.autoencoder.hidden_width);
    }
    if (j.contains("annealing")) {
        const auto& s = j["annealing"];
        check_keys(s, "annealing", {"chains", "iterations", "cooling", "initial_temperature", "step"});
        c.sa.chains = get_or(s, "chains", c.sa.chains);
        c.sa.iterations = get_or(s, "iterations", c.sa.iterations);
        c.sa.cooling = get_or(s, "cooling", c.sa.cooling);
        c.sa.initial_temperature = get_or(s, "initial_temperature", c.sa.initial_temperature);
        c.sa.step = get_or(s, "step", c.sa.step);
    }
    c.sl_folds = get_or(j, "sl_folds", c.sl_folds);
    return c;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
    return from_json(j, std::filesystem::path(path).parent_path().string());
}

ojson PipelineConfig::to_json() const {
    ojson j;
    j["features"] = features_path;
    j["responses"] = responses_path;
    j["response"] = responses;
    j["untreated_label"] = untreated_label;
    j["screening"] = {{"min_variance_quantile", screening.min_variance_quantile},
                      {"min_mean_expression", screening.min_mean_expression},
                      {"treatment_coverage", screening.treatment_coverage},
                      {"rank_mode", rank_mode_name(rank_mode)},
                      {"prefilter", prefilter}};
    j["L_sup"] = L_sup;
    j["methods"] = methods;
    j["c1"] = grid.c1;
    j["c2"] = grid.c2;
    j["lambda"] = grid.lambda;
    j["folds"] = folds;
    j["inner_folds"] = inner_folds;
    j["seed"] = seed;
    j["out"] = out_dir;
    j["forest"] = forest_to_json(forest);
    j["smoothing"] = forest_to_json(smoothing);
    ojson cl;
    cl["tolerance"] = classifier.tolerance;
    cl["max_iterations"] = classifier.max_iterations;
    if (classifier.bandwidth) cl["bandwidth"] = *classifier.bandwidth;
    j["classifier"] = cl;
    j["autoencoder"] = {{"epochs", autoencoder.epochs},
                        {"learning_rate", autoencoder.learning_rate},
                        {"batch_size", autoencoder.batch_size},
                        {"bottleneck_grid", autoencoder.bottleneck_grid},
                        {"cv_folds", autoencoder.cv_folds},
                        {"hidden_width", autoencoder.hidden_width}};
    j["annealing"] = {{"chains", sa.chains},
                      {"iterations", sa.iterations},
                      {"cooling", sa.cooling},
                      {"initial_temperature", sa.initial_temperature},
                      {"step", sa.step}};
    j["sl_folds"] = sl_folds;
    return j;
}

void PipelineConfig::validate() const {
    namespace fs = std::filesystem;
    if (features_path.empty() || responses_path.empty()) throw ValidationError("config needs 'features' and 'responses' paths");
    if (!fs::exists(features_path)) throw ValidationError("features file not found: " + features_path);
    if (!fs::exists(responses_path)) throw ValidationError("responses file not found: " + responses_path);
    if (responses.empty()) throw ValidationError("response list is empty");
    for (const auto& r : responses)
        if (r != "neg_bar" && r != "log_ttd") throw ValidationError("response must be neg_bar or log_ttd, got '" + r + "'");
    if (L_sup.empty()) throw ValidationError("L_sup grid is empty");
    if (methods.empty()) throw ValidationError("method list is empty");
    for (const auto& m : methods) (void)method(m);
    grid.validate();
    if (folds < 2) throw ValidationError("folds must be >= 2");
    if (inner_folds < 2) throw ValidationError("inner_folds must be >= 2");
    if (sl_folds < 2) throw ValidationError("sl_folds must be >= 2");
    screening.validate();
    autoencoder.validate();
    sa.validate();
}

MethodSpec PipelineConfig::method(const std::string& name) const {
    MethodSpec s = method_from_name(name);
    auto apply = [&](MethodSpec& m) {
        m.forest = forest;
        m.smoothing = smoothing;
        m.classifier = classifier;
        m.autoencoder = autoencoder;
        m.sa = sa;
        m.sl_folds = sl_folds;
    };
    apply(s);
    for (auto& m : s.members) apply(m);
    return s;
}

std::size_t gene_count(const FeatureMatrix& features) {
    std::set<std::string> genes;
    for (const auto& f : features.feature_names) genes.insert(gene_of(f));
    return genes.size();
}

PdxDataset prepare_dataset(const PipelineConfig& config, const std::string& response) {
    PdxDataset d = load_dataset(config.features_path, config.responses_path, response, config.untreated_label);
    if (config.prefilter) {
        d = filter_treatments(d, config.screening.treatment_coverage);
        d = with_features(d, filter_features(d.features, config.screening));
    }
    const std::size_t genes = gene_count(d.features);
    for (std::size_t L : config.L_sup)
        if (L > genes)
            throw ValidationError("L_sup = " + std::to_string(L) + " exceeds the " + std::to_string(genes) +
                                  " genes available after filtering");
    return d;
}

FittedMethod fit_full(const PipelineConfig& config, const MethodSpec& spec, const PdxDataset& dataset, std::size_t L_sup,
                      int workers) {
    PdxDataset data = dataset;
    if (L_sup > 0) {
        const auto ranked = rank_genes(data, config.rank_mode, workers);
        data = with_features(data, restrict_features(data.features, select_top(ranked, L_sup, data.features)));
    }
    const auto tuned = tune(spec, config.grid, data, config.inner_folds, derive_seed(config.seed, 7), workers);
    return fit_method(spec, data, tuned.best, derive_seed(config.seed, 8), workers);
}

std::string plot_csv_by_method(const std::vector<ValueReport>& reports) {
    std::vector<const ValueReport*> rows;
    for (const auto& r : reports) rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(), [](const ValueReport* a, const ValueReport* b) {
        return std::tie(a->response, a->method, a->L_sup) < std::tie(b->response, b->method, b->L_sup);
    });
    std::ostringstream os;
    os << "response,method,variant,L_sup,metric,value\n";
    for (const auto* r : rows)
        for (const auto& [metric, v] : {std::pair{"p_opt", r->p_opt}, std::pair{"p_obs", r->p_obs}})
            os << r->response << ',' << r->method << ',' << r->variant << ',' << r->L_sup << ',' << metric << ',' << fmt(v) << '\n';
    return os.str();
}

std::string plot_csv_by_lsup(const std::vector<ValueReport>& reports) {
    std::vector<const ValueReport*> rows;
    for (const auto& r : reports) rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(), [](const ValueReport* a, const ValueReport* b) {
        return std::tie(a->response, a->L_sup, a->method) < std::tie(b->response, b->L_sup, b->method);
    });
    std::ostringstream os;
    os << "response,L_sup,method,variant,fold,p_opt\n";
    for (const auto* r : rows) {
        for (const auto& fr : r->fold_results)
            if (fr.evaluated)
                os << r->response << ',' << r->L_sup << ',' << r->method << ',' << r->variant << ',' << fr.fold << ','
                   << fmt(fr.v_opt != 0.0 ? fr.value / fr.v_opt : kMissing) << '\n';
        os << r->response << ',' << r->L_sup << ',' << r->method << ',' << r->variant << ",all," << fmt(r->p_opt) << '\n';
    }
    return os.str();
}

std::vector<ValueReport> read_report_json(const std::string& text) {
    json arr;
    try {
        arr = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("report JSON: ") + e.what());
    }
    if (!arr.is_array()) throw ValidationError("report JSON must be an array");
    auto num = [](const json& v) { return v.is_null() ? kMissing : v.get<double>(); };
    std::vector<ValueReport> out;
    for (const auto& j : arr) {
        ValueReport r;
        r.method = j.at("method").get<std::string>();
        r.variant = j.at("variant").get<std::string>();
        r.response = j.at("response").get<std::string>();
        r.L_sup = j.at("L_sup").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.folds = j.at("folds").get<int>();
        r.v_bar = num(j.at("v_bar"));
        r.sd = num(j.at("sd"));
        r.v_obs = num(j.at("v_obs"));
        r.v_opt = num(j.at("v_opt"));
        r.p_opt = num(j.at("p_opt"));
        r.p_obs = num(j.at("p_obs"));
        for (const auto& v : j.at("per_fold_values")) r.per_fold_values.push_back(num(v));
        for (const auto& d : j.at("fold_details")) {
            FoldResult fr;
            fr.fold = d.at("fold").get<int>();
            fr.evaluated = d.at("evaluated").get<bool>();
            fr.note = d.at("note").get<std::string>();
            fr.train_lines = d.at("train_lines").get<Index>();
            fr.test_lines = d.at("test_lines").get<Index>();
            fr.params = {d.at("c1").get<int>(), d.at("c2").get<int>(), d.at("lambda").get<double>()};
            fr.value = num(d.at("value"));
            fr.v_obs = num(d.at("v_obs"));
            fr.v_opt = num(d.at("v_opt"));
            r.fold_results.push_back(fr);
        }
        out.push_back(std::move(r));
    }
    return out;
}

RunSummary run_pipeline(const PipelineConfig& config, int workers, RunStages stages) {
    config.validate();
    namespace fs = std::filesystem;
    const fs::path out(config.out_dir);
    fs::create_directories(out);

    RunSummary summary;
    std::vector<PdxDataset> datasets;
    for (const auto& resp : config.responses) datasets.push_back(prepare_dataset(config, resp));

    for (std::size_t r = 0; r < config.responses.size(); ++r)
        for (const auto& m : config.methods)
            for (std::size_t L : config.L_sup) summary.cells.push_back({config.responses[r], m, L, {}, false, false, "", ""});

    parallel_for(summary.cells.size(), workers, [&](std::size_t c) {
        auto& cell = summary.cells[c];
        const std::size_t r = static_cast<std::size_t>(
            std::find(config.responses.begin(), config.responses.end(), cell.response) - config.responses.begin());
        const PdxDataset& data = datasets[r];
        const MethodSpec spec = config.method(cell.method);
        const std::string id = cell_id(cell.response, cell.method, cell.L_sup);
        try {
            if (stages.evaluate) {
                CvOptions o;
                o.folds = config.folds;
                o.inner_folds = config.inner_folds;
                o.grid = config.grid;
                o.L_sup = cell.L_sup;
                o.rank_mode = config.rank_mode;
                o.response = cell.response;
                o.seed = config.seed;
                cell.report = cross_validate(spec, data, o);
                cell.evaluated = true;
            }
            if (stages.fit) {
                const FittedMethod fitted = fit_full(config, spec, data, cell.L_sup, 1);
                std::ostringstream model;
                write_fitted_method(model, fitted);
                cell.model_file = "models/" + id + ".model";
                write_file_atomic((out / cell.model_file).string(), model.str());
                if (fitted.dendrogram) {
                    std::ostringstream dend;
                    write_dendrogram(dend, *fitted.dendrogram);
                    write_file_atomic((out / ("models/" + id + ".dendrogram.txt")).string(), dend.str());
                }
                cell.fitted = true;
            }
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    });

    std::vector<ValueReport> reports;
    for (const auto& cell : summary.cells) {
        const std::string id = cell_id(cell.response, cell.method, cell.L_sup);
        if (!cell.error.empty()) summary.failures.push_back(id + ": " + cell.error);
        if (cell.evaluated) reports.push_back(cell.report);
        if (cell.fitted) {
            summary.outputs.push_back(cell.model_file);
            if (fs::exists(out / ("models/" + id + ".dendrogram.txt")))
                summary.outputs.push_back("models/" + id + ".dendrogram.txt");
        }
    }

    if (stages.evaluate) {
        std::string csv = report_csv_header() + "\n";
        for (const auto& r : reports) csv += report_csv_row(r) + "\n";
        write_file_atomic((out / "report.csv").string(), csv);
        std::ostringstream js;
        write_report_json(js, reports);
        write_file_atomic((out / "report.json").string(), js.str());
        write_file_atomic((out / "plot_popt_by_method.csv").string(), plot_csv_by_method(reports));
        write_file_atomic((out / "plot_popt_by_lsup.csv").string(), plot_csv_by_lsup(reports));
        for (const char* f : {"report.csv", "report.json", "plot_popt_by_method.csv", "plot_popt_by_lsup.csv"})
            summary.outputs.push_back(f);
    }

    ojson manifest;
    manifest["tool"] = "pdxitr";
    manifest["version"] = kVersion;
    manifest["config"] = config.to_json();
    manifest["seed"] = config.seed;
    manifest["stages"] = {{"evaluate", stages.evaluate}, {"fit", stages.fit}};
    ojson cells = ojson::array();
    for (const auto& cell : summary.cells) {
        ojson c;
        c["response"] = cell.response;
        c["method"] = cell.method;
        c["L_sup"] = cell.L_sup;
        c["status"] = cell.error.empty() ? "ok" : "failed";
        if (!cell.error.empty()) c["error"] = cell.error;
        if (cell.fitted) c["model"] = cell.model_file;
        cells.push_back(std::move(c));
    }
    manifest["cells"] = cells;
    manifest["outputs"] = summary.outputs;
    manifest["failures"] = summary.failures;
    write_file_atomic((out / "manifest.json").string(), manifest.dump(2) + "\n");
    return summary;
}

SyntheticConfig synthetic_from_json(const json& j) {
    check_keys(j, "synthetic config", {"lines", "treatments", "features", "sigma", "seed", "class_of", "class_effects",
                                       "informative", "drop_fraction", "secondary"});
    SyntheticConfig c;
    c.lines = get_or<Index>(j, "lines", c.lines);
    c.treatments = get_or<Index>(j, "treatments", c.treatments);
    c.features = get_or<Index>(j, "features", c.features);
    c.sigma = get_or(j, "sigma", c.sigma);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.class_of = get_or(j, "class_of", c.class_of);
    c.informative = get_or<Index>(j, "informative", c.informative);
    c.drop_fraction = get_or(j, "drop_fraction", c.drop_fraction);
    c.secondary = get_or(j, "secondary", c.secondary);
    if (j.contains("class_effects")) {
        for (const auto& e : j["class_effects"]) {
            check_keys(e, "class effect", {"intercept", "beta", "step_feature", "step_threshold", "step_height"});
            EffectFunction f;
            f.intercept = get_or(e, "intercept", 0.0);
            const auto beta = get_or(e, "beta", std::vector<double>{});
            f.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Index>(beta.size()));
            f.step_feature = get_or(e, "step_feature", -1);
            f.step_threshold = get_or(e, "step_threshold", 0.0);
            f.step_height = get_or(e, "step_height", 0.0);
            c.class_effects.push_back(std::move(f));
        }
    }
    c.validate();
    return c;
}

}  // namespace pdxitr
