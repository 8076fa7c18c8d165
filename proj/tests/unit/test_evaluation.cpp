#include "../support.hpp"
#include "pdxitr/evaluation.hpp"
#include "pdxitr/synthetic.hpp"

#include <doctest.h>

using namespace pdxitr;

namespace {

CenteredRewards two_line_rewards() {
    CenteredRewards c;
    c.treatments = {{"untreated", true}, {"T1", false}, {"T2", false}};
    c.line_ids = {"L1", "L2"};
    c.active = {1, 2};
    c.null_group = {0};
    c.R.resize(2, 2);
    c.R << 1.0, 0.5,
           0.0, 0.5;
    c.null_R = Eigen::MatrixXd::Zero(1, 2);
    c.null_mean = Eigen::VectorXd::Zero(2);
    c.scale = Eigen::VectorXd::Ones(3);
    return c;
}

}  // namespace

TEST_CASE("value of a recommendation on a worked example") {
    const auto c = two_line_rewards();
    CHECK(estimate_value(c, {{1}, {1, 2}}) == doctest::Approx(2.0 / 3.0));
    CHECK(estimate_value(c, {{2}, {1}}) == doctest::Approx(0.25));
    CHECK(estimate_value(c, {{0}, {0}}) == doctest::Approx(0.0));
    CHECK_THROWS_WITH(estimate_value(c, {{}, {}}), doctest::Contains("no concordant mice"));
    CHECK_THROWS_AS(estimate_value(c, {{1}}), ValidationError);

    const auto s = summarize_values(c);
    CHECK(s.v_obs == doctest::Approx(0.5));
    CHECK(s.v_opt == doctest::Approx(0.75));
}

TEST_CASE("property: value estimator matches a brute-force ratio") {
    oracle::Gen g(1);
    for (int rep = 0; rep < 100; ++rep) {
        const Index m = g.integer(2, 12), P = g.integer(2, 5);
        Eigen::MatrixXd resp(P, m);
        for (Index t = 0; t < P; ++t)
            for (Index j = 0; j < m; ++j) resp(t, j) = t > 1 && j > 1 && g.uniform() < 0.3 ? kMissing : g.normal();
        auto sd = [&](Index t) {
            double s = 0.0, ss = 0.0, n = 0.0;
            for (Index j = 0; j < m; ++j)
                if (is_present(resp(t, j))) {
                    s += resp(t, j);
                    ss += resp(t, j) * resp(t, j);
                    n += 1.0;
                }
            return std::sqrt((ss - s * s / n) / (n - 1.0));
        };
        const auto c = standardize_and_center(oracle::make_dataset(resp, g.matrix(m, 1)), 0);
        std::vector<std::vector<Index>> rec(static_cast<std::size_t>(m));
        double sum = 0.0, count = 0.0;
        for (Index j = 0; j < m; ++j) {
            for (Index t = 0; t < P; ++t)
                if (g.uniform() < 0.5) rec[static_cast<std::size_t>(j)].push_back(t);
            rec[static_cast<std::size_t>(j)].push_back(1);
            std::sort(rec[static_cast<std::size_t>(j)].begin(), rec[static_cast<std::size_t>(j)].end());
            rec[static_cast<std::size_t>(j)].erase(std::unique(rec[static_cast<std::size_t>(j)].begin(), rec[static_cast<std::size_t>(j)].end()),
                                                   rec[static_cast<std::size_t>(j)].end());
            for (Index t : rec[static_cast<std::size_t>(j)]) {
                if (!is_present(resp(t, j))) continue;
                const double r = resp(t, j) / sd(t) - resp(0, j) / sd(0);
                sum += r;
                count += 1.0;
            }
        }
        CHECK(estimate_value(c, rec) == doctest::Approx(sum / count).epsilon(1e-10));
    }
}

TEST_CASE("method names") {
    const auto a = method_from_name("ql2-rf+smoothed+dae");
    CHECK(a.kind == MethodKind::TreeQL2);
    CHECK(a.learner == RegressorKind::Forest);
    CHECK(a.smoothed);
    CHECK(a.dae);
    CHECK(method_variant(a) == "smoothed+dae");
    CHECK(method_variant(method_from_name("owl-gaussian")) == "plain");
    CHECK(method_from_name("sl4").members.size() == 4);
    CHECK(method_from_name("sl6").members.size() == 6);
    CHECK(method_from_name("sl8").members.size() == 8);
    CHECK(method_from_name("sl16").members.size() == 16);
    CHECK_THROWS_AS(method_from_name("ql3-lasso"), ValidationError);
    CHECK_THROWS_AS(method_from_name("ql1-lasso+fast"), ValidationError);
    CHECK_THROWS_AS(method_from_name("sl4+dae"), ValidationError);
}

TEST_CASE("tuning grid points collapse unused axes") {
    TuningGrid grid;
    grid.c1 = {0, 1};
    grid.c2 = {1, 2, 3};
    grid.lambda = {0.1, 0.2};
    CHECK(grid.points(method_from_name("ql1-lasso")).size() == 12);
    CHECK(grid.points(method_from_name("ql1-rf")).size() == 6);
    CHECK(grid.points(method_from_name("ots-lasso")).size() == 2);
    for (const auto& p : grid.points(method_from_name("ots-rf"))) {
        CHECK(p.c1 == 0);
        CHECK(p.lambda == 0.1);
    }
    grid.c2 = {0};
    CHECK_THROWS_AS(grid.validate(), ValidationError);
}

namespace {

PdxDataset small_synthetic(std::uint64_t seed, Index lines = 30) {
    SyntheticConfig cfg;
    cfg.lines = lines;
    cfg.treatments = 4;
    cfg.features = 4;
    cfg.seed = seed;
    cfg.class_of = {0, 0, 1, 1};
    return generate(cfg).first;
}

}  // namespace

TEST_CASE("tuning") {
    const auto data = small_synthetic(1);
    TuningGrid grid;
    grid.lambda = {0.3};
    CHECK(tune(method_from_name("ql1-lasso"), grid, data, 3, 0).best == TuningPoint{0, 1, 0.3});

    // Lambda ratios of 1 and above shrink every fit to its intercept, so the
    // two points tie and the more parsimonious one is kept.
    grid.lambda = {1.0, 2.0};
    const auto t = tune(method_from_name("ql1-lasso"), grid, data, 3, 0);
    REQUIRE(t.values.size() == 2);
    CHECK(t.values[0] == t.values[1]);
    CHECK(t.best.lambda == 2.0);
}

TEST_CASE("cross-validation") {
    const auto data = small_synthetic(2, 24);
    CvOptions o;
    o.folds = 4;
    o.seed = 3;
    const auto spec = method_from_name("ql1-lasso");
    const auto a = cross_validate(spec, data, o);
    o.workers = 3;
    const auto b = cross_validate(spec, data, o);
    CHECK(a.per_fold_values == b.per_fold_values);
    CHECK(a.fold_results.size() == 4);
    Index covered = 0;
    for (const auto& fr : a.fold_results) covered += fr.test_lines;
    CHECK(covered == 24);
    if (is_present(a.v_bar)) CHECK(a.p_opt == doctest::Approx(a.v_bar / a.v_opt));

    o.folds = 24;
    const auto loo = cross_validate(method_from_name("ots-lasso"), data, o);
    for (const auto& fr : loo.fold_results) CHECK(fr.test_lines == 1);

    const auto folds = outer_folds(data, 4, 3);
    CHECK(folds == outer_folds(data, 4, 3));
}

TEST_CASE("fitted methods recommend valid treatments") {
    const auto data = small_synthetic(3);
    for (const char* name : {"ql1-lasso", "ql2-rf", "owl-linear", "owl-gaussian", "ots-lasso", "ots-rf", "ql1-lasso+smoothed"}) {
        CAPTURE(name);
        const auto fm = fit_method(method_from_name(name), data, {0, 1, 0.1}, 5);
        const auto rec = fm.recommend(data.features.values);
        REQUIRE(rec.size() == static_cast<std::size_t>(data.m()));
        for (const auto& r : rec) {
            CHECK(!r.empty());
            for (Index t : r) CHECK(t < static_cast<Index>(data.treatments.size()));
        }
    }
}
