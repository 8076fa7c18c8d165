#include "../support.hpp"
#include "pdxitr/screening.hpp"

#include <doctest.h>

using namespace pdxitr;

namespace {

FeatureMatrix columns(const Eigen::MatrixXd& v, const std::string& suffix = ".cn") {
    FeatureMatrix f;
    for (Index j = 0; j < v.rows(); ++j) f.line_ids.push_back("L" + std::to_string(j));
    for (Index k = 0; k < v.cols(); ++k) f.feature_names.push_back("G" + std::to_string(k) + suffix);
    f.values = v;
    return f;
}

}  // namespace

TEST_CASE("filter_features") {
    oracle::Gen g(3);
    Eigen::MatrixXd v = g.matrix(12, 10);
    for (Index k = 0; k < 10; ++k) v.col(k) *= static_cast<double>(k + 1);

    SUBCASE("zero-variance feature is removed") {
        Eigen::MatrixXd w = v;
        w.col(4).setConstant(2.0);
        auto out = filter_features(columns(w), {0.0, -INFINITY, 0.9});
        CHECK(out.cols() == 9);
        CHECK(std::find(out.feature_names.begin(), out.feature_names.end(), "G4.cn") == out.feature_names.end());
    }
    SUBCASE("vacuous thresholds keep everything") {
        auto out = filter_features(columns(v), {0.0, -INFINITY, 0.9});
        CHECK(out.feature_names == columns(v).feature_names);
    }
    SUBCASE("quantile 0.5 keeps the five largest variances") {
        auto out = filter_features(columns(v), {0.5, -INFINITY, 0.9});
        REQUIRE(out.cols() == 5);
        CHECK(out.feature_names.front() == "G5.cn");
        CHECK(out.feature_names.back() == "G9.cn");
    }
    SUBCASE("low-expression rna features are dropped") {
        Eigen::MatrixXd w = v.array().abs();
        w.col(0).array() -= 100.0;
        auto out = filter_features(columns(w, ".rna"), {0.0, 0.0, 0.9});
        CHECK(out.cols() == 9);
    }
    SUBCASE("everything removed is an error") {
        Eigen::MatrixXd w = Eigen::MatrixXd::Ones(5, 3);
        CHECK_THROWS_WITH(filter_features(columns(w), {}), doctest::Contains("empty feature set"));
    }
}

TEST_CASE("filter_treatments") {
    const Index m = 10;
    Eigen::MatrixXd y = Eigen::MatrixXd::Constant(3, m, 1.0);
    for (Index j = 0; j < 5; ++j) y(0, j) = kMissing;  // untreated in 5 of 10 lines
    for (Index j = 0; j < 2; ++j) y(2, j) = kMissing;  // T2 in 8 of 10
    oracle::Gen g(4);
    const auto d = oracle::make_dataset(y, g.matrix(m, 2));

    auto kept = filter_treatments(d, 0.9);
    REQUIRE(kept.P() == 2);
    CHECK(kept.treatments[0].is_untreated);
    CHECK(kept.treatments[1].id == "T1");
    CHECK(filter_treatments(d, 0.0).P() == 3);
    CHECK_THROWS_AS(filter_treatments(d, 1.0 + 1e-9), ValidationError);
}

TEST_CASE("dcov hand example and constant input") {
    Eigen::MatrixXd x(2, 1), y(2, 1);
    x << 0, 2;
    y << 1, 5;
    CHECK(dcov(x, y) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    Eigen::MatrixXd c = Eigen::MatrixXd::Constant(5, 2, 3.0);
    oracle::Gen g(5);
    CHECK(dcov(c, g.matrix(5, 2)) == 0.0);
    CHECK_THROWS_AS(dcov(g.matrix(3, 1), g.matrix(4, 1)), ValidationError);
}

TEST_CASE("property: dcov matches the brute-force oracle and is symmetric") {
    oracle::Gen g(6);
    for (int rep = 0; rep < 300; ++rep) {
        const Index n = g.integer(2, 9);
        const Eigen::MatrixXd x = g.matrix(n, g.integer(1, 4));
        const Eigen::MatrixXd y = g.matrix(n, g.integer(1, 4));
        CHECK(std::abs(dcov(x, y) - oracle::brute_dcov(x, y)) < 1e-12);
        CHECK(std::abs(dcov(x, y) - dcov(y, x)) < 1e-12);
        CHECK(dcov(x, y) >= 0.0);
    }
}

TEST_CASE("dcov is templated on the scalar type") {
    Eigen::MatrixXf x(3, 1), y(3, 1);
    x << 0, 1, 3;
    y << 1, 0, 2;
    const float v = dcov(x, y);
    CHECK(v == doctest::Approx(oracle::brute_dcov(x.cast<double>(), y.cast<double>())).epsilon(1e-5));
}

TEST_CASE("rank_genes puts the response-driving gene first") {
    oracle::Gen g(7);
    const Index m = 30;
    Eigen::MatrixXd feat = g.matrix(m, 6);
    Eigen::MatrixXd y(3, m);
    for (Index j = 0; j < m; ++j) {
        y(0, j) = g.normal();
        y(1, j) = feat(j, 2);
        y(2, j) = g.normal();
    }
    auto d = oracle::make_dataset(y, feat);
    d.features.feature_names = {"A.cn", "B.cn", "HIT.cn", "C.cn", "D.cn", "FLAT.cn"};
    d.features.values.col(5).setConstant(1.0);
    const auto ranked = rank_genes(d, RankMode::Combined, 2);
    REQUIRE(ranked.size() == 6);
    CHECK(ranked.front().gene == "HIT");
    CHECK(ranked.back().gene == "FLAT");
    CHECK(ranked.back().score == 0.0);
    CHECK(rank_genes(d, RankMode::Combined, 1).front().score == ranked.front().score);
}

TEST_CASE("rank_genes ties break by gene name") {
    Eigen::MatrixXd feat(4, 2);
    feat << 1, 1, 2, 2, 3, 3, 4, 4;
    Eigen::MatrixXd y(2, 4);
    y << 0.5, -1, 2, 0, 1, 3, 2, 5;
    auto d = oracle::make_dataset(y, feat);
    d.features.feature_names = {"ZED.cn", "ALPHA.cn"};
    const auto r = rank_genes(d);
    CHECK(r[0].score == r[1].score);
    CHECK(r[0].gene == "ALPHA");
}

TEST_CASE("select_top and restrict_features") {
    FeatureMatrix f;
    f.line_ids = {"a", "b"};
    f.feature_names = {"X.rna", "Y.rna", "X.cn", "Z.mut", "Y.cn", "X.mut"};
    f.values = Eigen::MatrixXd::Random(2, 6);
    std::vector<GeneScore> ranked{{"X", 3}, {"Y", 2}, {"Z", 1}};
    auto one = select_top(ranked, 1, f);
    CHECK(one.feature_names == std::vector<std::string>{"X.rna", "X.cn", "X.mut"});
    CHECK(restrict_features(f, one).cols() == 3);
    auto all = select_top(ranked, 3, f);
    CHECK(all.feature_names == f.feature_names);
    CHECK_THROWS_WITH(select_top(ranked, 4, f), doctest::Contains("L_sup = 4"));
    // nested sets along a grid
    auto two = select_top(ranked, 2, f);
    for (const auto& n : one.feature_names)
        CHECK(std::find(two.feature_names.begin(), two.feature_names.end(), n) != two.feature_names.end());
}
