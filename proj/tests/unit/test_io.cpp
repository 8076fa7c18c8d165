#include "../support.hpp"
#include "pdxitr/pipeline.hpp"
#include "pdxitr/serialization.hpp"
#include "pdxitr/tsv.hpp"

#include <doctest.h>

#include <sstream>

using namespace pdxitr;

TEST_CASE("feature table round trip") {
    oracle::Gen g(1);
    FeatureMatrix fm;
    fm.values = g.matrix(4, 3);
    fm.values(1, 2) = 1.0 / 3.0;
    fm.line_ids = {"a", "b", "c", "d"};
    fm.feature_names = {"X.rna", "Y.cn", "Z.mut"};
    std::stringstream ss;
    write_features_tsv(ss, fm);
    const auto back = read_features_tsv(ss);
    CHECK(back.values == fm.values);
    CHECK(back.line_ids == fm.line_ids);
    CHECK(back.feature_names == fm.feature_names);
}

TEST_CASE("feature table errors carry a location") {
    std::istringstream dup("line_id\tA\nL1\t1\nL1\t2\n");
    CHECK_THROWS_WITH(read_features_tsv(dup, "f.tsv"), doctest::Contains("f.tsv:3: duplicate line_id"));
    std::istringstream bad("line_id\tA\nL1\tx\n");
    CHECK_THROWS_WITH(read_features_tsv(bad, "f.tsv"), doctest::Contains("f.tsv:2"));
    std::istringstream width("line_id\tA\tB\nL1\t1\n");
    CHECK_THROWS_AS(read_features_tsv(width), ValidationError);
    std::istringstream header("id\tA\n");
    CHECK_THROWS_AS(read_features_tsv(header), ValidationError);
}

TEST_CASE("response tables") {
    SUBCASE("precomputed round trip") {
        SyntheticConfig cfg;
        cfg.lines = 5;
        cfg.treatments = 2;
        cfg.features = 2;
        const auto data = generate(cfg).first;
        std::stringstream ss;
        write_responses_tsv(ss, data);
        const auto bar = read_responses_tsv(ss, "neg_bar", "untreated", "r");
        REQUIRE(bar.records.size() == data.records.size());
        for (std::size_t k = 0; k < bar.records.size(); ++k) {
            CHECK(bar.records[k].response == data.records[k].response);
            CHECK(bar.records[k].secondary == data.records[k].secondary);
        }
        CHECK(bar.treatments.front().is_untreated);
        std::stringstream again(ss.str());
        const auto ttd = read_responses_tsv(again, "log_ttd", "untreated", "r");
        CHECK(ttd.records.front().response == *data.records.front().secondary);
    }
    SUBCASE("raw measurements become outcomes") {
        std::istringstream raw("line_id\ttreatment\tday\tmajor_mm\tminor_mm\n"
                               "L1\tuntreated\t0\t2\t2\n"
                               "L1\tuntreated\t7\t4\t4\n"
                               "L1\tuntreated\t14\t6\t6\n");
        const auto t = read_responses_tsv(raw, "neg_bar", "untreated", "r");
        REQUIRE(t.records.size() == 1);
        CHECK(std::isfinite(t.records[0].response));
        CHECK(t.records[0].secondary.has_value());
    }
    SUBCASE("bad inputs") {
        std::istringstream a("line_id\ttreatment\tneg_bar\n");
        CHECK_THROWS_AS(read_responses_tsv(a, "neg_bar", "untreated", "r"), ValidationError);
        std::istringstream b("line_id\ttreatment\tneg_bar\tlog_ttd\n");
        CHECK_THROWS_AS(read_responses_tsv(b, "volume", "untreated", "r"), ValidationError);
        std::istringstream c("line_id\ttreatment\tneg_bar\tlog_ttd\nL1\tT\tNA\t1\n");
        const auto t = read_responses_tsv(c, "neg_bar", "untreated", "r");
        CHECK(t.records.empty());
        CHECK(t.warnings.size() == 1);
    }
}

namespace {

PdxDataset fixture_data() {
    SyntheticConfig cfg;
    cfg.lines = 30;
    cfg.treatments = 4;
    cfg.features = 4;
    cfg.seed = 9;
    cfg.class_of = {0, 0, 1, 1};
    return generate(cfg).first;
}

void same_recommendations(const FittedMethod& a, const FittedMethod& b, const Eigen::MatrixXd& X) {
    CHECK(a.recommend(X) == b.recommend(X));
}

}  // namespace

TEST_CASE("fitted models round trip exactly") {
    const auto data = fixture_data();
    oracle::Gen g(2);
    const Eigen::MatrixXd X = g.matrix(50, 4);
    for (const char* name : {"ql1-lasso", "ql2-rf", "owl-gaussian", "ots-lasso", "ots-rf", "ql1-lasso+dae", "sl4"}) {
        CAPTURE(name);
        MethodSpec spec = method_from_name(name);
        spec.autoencoder.epochs = 30;
        spec.sa.iterations = 50;
        spec.forest.n_trees = 10;
        spec.smoothing.n_trees = 10;
        for (auto& m : spec.members) {
            m.forest.n_trees = 10;
            m.smoothing.n_trees = 10;
        }
        const auto fm = fit_method(spec, data, {0, 1, 0.1}, 3);
        std::stringstream ss;
        write_fitted_method(ss, fm);
        const std::string text = ss.str();
        const auto back = read_fitted_method(ss);
        same_recommendations(fm, back, X);
        std::stringstream ss2;
        write_fitted_method(ss2, back);
        CHECK(ss2.str() == text);
    }
    std::istringstream junk("not a model\n");
    CHECK_THROWS_AS(read_fitted_method(junk), ValidationError);
}

TEST_CASE("pipeline configuration") {
    const auto j = nlohmann::json::parse(R"({"features": "f.tsv", "responses": "r.tsv", "methods": ["ql1-lasso", "sl4"],
        "c2": [1, 2], "lambda": [0.05], "seed": 11, "screening": {"rank_mode": "predictive"}})");
    const auto c = PipelineConfig::from_json(j, "/data");
    CHECK(c.features_path == "/data/f.tsv");
    CHECK(c.grid.c2 == std::vector<int>{1, 2});
    CHECK(c.seed == 11);
    CHECK(c.rank_mode == RankMode::Predictive);
    CHECK(c.folds == 5);

    const auto back = PipelineConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
    CHECK(back.to_json() == c.to_json());

    CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json::parse(R"({"folds": 3, "fold": 2})")), ValidationError);
    CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json::parse(R"({"screening": {"rank_mode": "x"}})")), ValidationError);
    CHECK_THROWS_AS(c.validate(), ValidationError);
}
