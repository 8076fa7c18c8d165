// Command-line front end for the pdxitr pipeline.

#include "pdxitr/pipeline.hpp"
#include "pdxitr/serialization.hpp"
#include "pdxitr/tsv.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace pdxitr;

namespace {

struct Common {
    std::string config;
    int workers = 1;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int default_workers() {
    if (const char* env = std::getenv("PDXITR_WORKERS")) {
        try {
            return std::max(1, std::stoi(env));
        } catch (...) {
            throw ValidationError("PDXITR_WORKERS must be a positive integer");
        }
    }
    return 1;
}

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
    auto* opt = cmd->add_option("--config", c.config, "pipeline configuration (JSON)");
    if (needs_config) opt->required();
    cmd->add_option("--workers", c.workers, "worker threads (default: $PDXITR_WORKERS or 1)")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", c.seed, "override the configured seed");
    cmd->add_option("--out", c.out, "output directory (overrides the config)");
}

PipelineConfig load_config(const Common& c) {
    PipelineConfig cfg = PipelineConfig::from_file(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out.empty()) cfg.out_dir = c.out;
    return cfg;
}

int finish(const RunSummary& s) {
    for (const auto& f : s.failures) std::cerr << "failed: " << f << '\n';
    return s.ok() ? 0 : 2;
}

int cmd_simulate(const Common& c, const std::string& synth_config) {
    SyntheticConfig sc;
    if (!synth_config.empty()) sc = synthetic_from_json(nlohmann::json::parse(read_file(synth_config)));
    if (c.seed) sc.seed = *c.seed;
    const std::string out = c.out.empty() ? "pdxitr-sim" : c.out;
    const auto [data, oracle] = generate(sc);

    std::ostringstream feat, resp;
    write_features_tsv(feat, data.features);
    write_responses_tsv(resp, data);
    write_file_atomic((fs::path(out) / "features.tsv").string(), feat.str());
    write_file_atomic((fs::path(out) / "responses.tsv").string(), resp.str());

    nlohmann::ordered_json o;
    o["seed"] = sc.seed;
    o["sigma"] = oracle.sigma;
    o["treatments"] = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < oracle.treatments.size(); ++t)
        o["treatments"].push_back({{"id", oracle.treatments[t].id}, {"class", oracle.true_class[t]}});
    auto grouping = oracle.true_grouping();
    o["true_grouping"] = nlohmann::ordered_json::array();
    for (const auto& g : grouping) {
        nlohmann::ordered_json ids = nlohmann::ordered_json::array();
        for (Index t : g) ids.push_back(oracle.treatments[static_cast<std::size_t>(t)].id);
        o["true_grouping"].push_back(ids);
    }
    o["optimal_value"] = oracle_optimal_value(oracle, grouping, data.features.values);
    write_file_atomic((fs::path(out) / "oracle.json").string(), o.dump(2) + "\n");

    nlohmann::ordered_json cfg;
    cfg["features"] = "features.tsv";
    cfg["responses"] = "responses.tsv";
    cfg["response"] = "neg_bar";
    cfg["methods"] = {"ql1-lasso", "ots-lasso"};
    cfg["c1"] = {0};
    cfg["c2"] = {1, 2};
    cfg["lambda"] = {0.1};
    cfg["folds"] = 5;
    cfg["seed"] = sc.seed;
    cfg["out"] = "results";
    write_file_atomic((fs::path(out) / "config.json").string(), cfg.dump(2) + "\n");
    std::cout << "wrote " << out << "/features.tsv, responses.tsv, oracle.json, config.json\n";
    return 0;
}

int cmd_screen(const Common& c) {
    const PipelineConfig cfg = load_config(c);
    cfg.validate();
    const fs::path out = fs::path(cfg.out_dir) / "screen";
    for (const auto& resp : cfg.responses) {
        const PdxDataset data = prepare_dataset(cfg, resp);
        const auto ranked = rank_genes(data, cfg.rank_mode, c.workers);
        std::ostringstream rank;
        rank << "rank\tgene\tscore\n";
        for (std::size_t i = 0; i < ranked.size(); ++i) rank << i + 1 << '\t' << ranked[i].gene << '\t' << ranked[i].score << '\n';
        write_file_atomic((out / (resp + "_gene_ranking.tsv")).string(), rank.str());
        for (std::size_t L : cfg.L_sup) {
            const FeatureMatrix fm = L == 0 ? data.features : restrict_features(data.features, select_top(ranked, L, data.features));
            std::ostringstream feat;
            write_features_tsv(feat, fm);
            write_file_atomic((out / (resp + "_features_L" + std::to_string(L) + ".tsv")).string(), feat.str());
        }
    }
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

int cmd_tree(const Common& c) {
    const PipelineConfig cfg = load_config(c);
    cfg.validate();
    const fs::path out = fs::path(cfg.out_dir) / "tree";
    for (const auto& resp : cfg.responses) {
        const PdxDataset data = prepare_dataset(cfg, resp);
        for (int c1 : cfg.grid.c1) {
            const CenteredRewards rewards = standardize_and_center(data, c1);
            const Dendrogram dend = build_tree(rewards);
            const std::string stem = resp + "_c1_" + std::to_string(c1);
            std::ostringstream d;
            write_dendrogram(d, dend);
            write_file_atomic((out / (stem + ".dendrogram.txt")).string(), d.str());

            std::ostringstream r;
            r << "treatment\tnull_group";
            for (const auto& id : rewards.line_ids) r << '\t' << id;
            r << '\n' << std::setprecision(17);
            for (Index t = 0; t < data.P(); ++t) {
                r << data.treatments[static_cast<std::size_t>(t)].id << '\t' << (rewards.is_null(t) ? 1 : 0);
                for (Index j = 0; j < rewards.lines(); ++j) {
                    const double v = rewards.reward(t, j);
                    r << '\t';
                    if (is_present(v))
                        r << v;
                    else
                        r << "NA";
                }
                r << '\n';
            }
            write_file_atomic((out / (stem + ".centered_rewards.tsv")).string(), r.str());

            std::ostringstream g;
            g << "c2\tgroup\ttreatment\n";
            for (int c2 : cfg.grid.c2) {
                if (c2 > dend.leaves() - 1) continue;
                const auto grouping = cut_tree(dend, c2, rewards);
                for (int code = 0; code <= grouping.group_count(); ++code)
                    for (Index t : grouping.treatments_of(code))
                        g << c2 << '\t' << (code == 0 ? std::string("null") : std::to_string(code)) << '\t'
                          << data.treatments[static_cast<std::size_t>(t)].id << '\n';
            }
            write_file_atomic((out / (stem + ".groups.tsv")).string(), g.str());
        }
    }
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

int cmd_report(const Common& c) {
    std::string dir = c.out;
    if (dir.empty() && !c.config.empty()) dir = load_config(c).out_dir;
    if (dir.empty()) throw ValidationError("report needs --out or --config");
    const auto reports = read_report_json(read_file((fs::path(dir) / "report.json").string()));
    std::string csv = report_csv_header() + "\n";
    for (const auto& r : reports) csv += report_csv_row(r) + "\n";
    write_file_atomic((fs::path(dir) / "report.csv").string(), csv);
    write_file_atomic((fs::path(dir) / "plot_popt_by_method.csv").string(), plot_csv_by_method(reports));
    write_file_atomic((fs::path(dir) / "plot_popt_by_lsup.csv").string(), plot_csv_by_lsup(reports));
    std::cout << csv;
    return 0;
}

int cmd_recommend(const std::string& model_path, const std::string& features_path, const std::string& out) {
    std::istringstream in(read_file(model_path));
    const FittedMethod fitted = read_fitted_method(in);
    FeatureMatrix fm = read_features_tsv(features_path);
    std::map<std::string, Index> col;
    for (std::size_t k = 0; k < fm.feature_names.size(); ++k) col.emplace(fm.feature_names[k], static_cast<Index>(k));
    std::vector<Index> cols;
    for (const auto& n : fitted.feature_names) {
        auto it = col.find(n);
        if (it == col.end()) throw ValidationError(features_path + ": missing feature '" + n + "'");
        cols.push_back(it->second);
    }
    fm = fm.select_columns(cols);
    const auto recs = fitted.recommend(fm.values);
    std::ostringstream os;
    os << "line_id\trecommended\n";
    for (Index j = 0; j < fm.rows(); ++j) {
        os << fm.line_ids[static_cast<std::size_t>(j)] << '\t';
        const auto& set = recs[static_cast<std::size_t>(j)];
        for (std::size_t k = 0; k < set.size(); ++k)
            os << (k ? "," : "") << fitted.centering.treatments[static_cast<std::size_t>(set[k])].id;
        os << '\n';
    }
    if (out.empty())
        std::cout << os.str();
    else
        write_file_atomic(out, os.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Individualized treatment rules for multi-treatment (PDX) studies"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Common common;
    std::string synth_config, model_path, features_path, rec_out;

    auto* simulate = app.add_subcommand("simulate", "generate a synthetic study with a known oracle");
    add_common(simulate, common, false);
    simulate->add_option("--synthetic", synth_config, "synthetic generator settings (JSON)")->check(CLI::ExistingFile);

    auto* screen = app.add_subcommand("screen", "filter features and rank genes by distance covariance");
    auto* tree = app.add_subcommand("tree", "center rewards, build the treatment tree and cut it");
    auto* fit = app.add_subcommand("fit", "tune and fit every configured method on all lines");
    auto* evaluate = app.add_subcommand("evaluate", "cross-validated value of every configured method");
    auto* superlearn = app.add_subcommand("superlearn", "evaluate and fit the configured superlearner presets");
    auto* run = app.add_subcommand("run", "evaluate and fit every configured method");
    for (auto* cmd : {screen, tree, fit, evaluate, superlearn, run}) add_common(cmd, common, true);

    auto* report = app.add_subcommand("report", "rebuild CSV and plot tables from report.json");
    add_common(report, common, false);

    auto* recommend = app.add_subcommand("recommend", "apply a fitted model to a features table");
    recommend->add_option("--model", model_path, "fitted model file")->required()->check(CLI::ExistingFile);
    recommend->add_option("--features", features_path, "features TSV")->required()->check(CLI::ExistingFile);
    recommend->add_option("--out", rec_out, "output TSV (default: stdout)");

    try {
        common.workers = default_workers();
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }

    try {
        if (*simulate) return cmd_simulate(common, synth_config);
        if (*screen) return cmd_screen(common);
        if (*tree) return cmd_tree(common);
        if (*report) return cmd_report(common);
        if (*recommend) return cmd_recommend(model_path, features_path, rec_out);

        PipelineConfig cfg = load_config(common);
        RunStages stages;
        if (*fit) stages.evaluate = false;
        if (*evaluate) stages.fit = false;
        if (*superlearn) {
            std::vector<std::string> sl;
            for (const auto& m : cfg.methods)
                if (m.rfind("sl", 0) == 0) sl.push_back(m);
            cfg.methods = sl.empty() ? std::vector<std::string>{"sl4"} : sl;
        }
        const RunSummary s = run_pipeline(cfg, common.workers, stages);
        std::cout << "wrote " << cfg.out_dir << " (" << s.outputs.size() << " files)\n";
        return finish(s);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
