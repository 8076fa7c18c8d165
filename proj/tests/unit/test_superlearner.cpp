#include "../support.hpp"
#include "pdxitr/superlearner.hpp"

#include <doctest.h>

#include <set>

using namespace pdxitr;

namespace {

struct Fixture {
    CenteredRewards rewards;
    Eigen::MatrixXd X;
    TreatmentGrouping grouping;
};

Fixture random_fixture(std::uint64_t seed, Index m = 30) {
    oracle::Gen g(seed);
    Fixture f;
    f.X = g.matrix(m, 3);
    Eigen::MatrixXd resp(5, m);
    for (Index j = 0; j < m; ++j) {
        resp(0, j) = g.normal();
        resp(1, j) = resp(2, j) = 0.0;
        for (Index t = 1; t < 5; ++t) resp(t, j) = (t <= 2 ? f.X(j, 0) : -f.X(j, 0)) + g.normal(0.3);
    }
    f.rewards = standardize_and_center(oracle::make_dataset(resp, f.X), 0);
    f.grouping = cut_tree(build_tree(f.rewards), 2, f.rewards);
    return f;
}

std::vector<TreeItr> members(const Fixture& f) {
    QLearningOptions a, b;
    b.variant = ItrVariant::QL2;
    b.learner.lambda_ratio = 0.3;
    OwlOptions c;
    return {fit_tree_qlearning(f.rewards, f.grouping, f.X, a), fit_tree_qlearning(f.rewards, f.grouping, f.X, b),
            fit_tree_owl(f.rewards, f.grouping, f.X, c)};
}

}  // namespace

TEST_CASE("property: simplex projection satisfies the variational inequality") {
    oracle::Gen g(1);
    for (int rep = 0; rep < 200; ++rep) {
        const Index n = g.integer(1, 7);
        Eigen::VectorXd v(n);
        for (Index k = 0; k < n; ++k) v(k) = g.normal(2.0);
        const Eigen::VectorXd w = project_to_simplex(v);
        CHECK(w.minCoeff() >= 0.0);
        CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
        for (int t = 0; t < 20; ++t) {
            Eigen::VectorXd y(n);
            for (Index k = 0; k < n; ++k) y(k) = -std::log(g.uniform(1e-12, 1.0));
            y /= y.sum();
            CHECK((v - w).dot(y - w) <= 1e-10);
        }
    }
    CHECK(project_to_simplex(Eigen::Vector3d(0.2, 0.3, 0.5)).isApprox(Eigen::Vector3d(0.2, 0.3, 0.5)));
    CHECK(project_to_simplex(Eigen::Vector2d(5, 0)).isApprox(Eigen::Vector2d(1, 0)));
    CHECK_THROWS_AS(project_to_simplex(Eigen::VectorXd()), ValidationError);
}

TEST_CASE("a vertex weight reproduces its sub-ITR") {
    for (std::uint64_t seed : {2, 3, 4}) {
        const auto f = random_fixture(seed);
        SuperLearner sl;
        sl.sub_itrs = members(f);
        sl.views.assign(sl.sub_itrs.size(), 0);
        oracle::Gen g(seed + 10);
        const Eigen::MatrixXd T = g.matrix(100, 3);
        for (Index k = 0; k < 3; ++k) {
            sl.weights = Eigen::VectorXd::Unit(3, k);
            for (Index i = 0; i < T.rows(); ++i)
                CHECK(recommend_sl(sl, T.row(i)) == sl.sub_itrs[static_cast<std::size_t>(k)].recommend_code(T.row(i)));
        }
    }
}

TEST_CASE("latent scores are oriented toward the named group") {
    const auto f = random_fixture(5);
    const auto itrs = members(f);
    oracle::Gen g(6);
    for (const auto& itr : itrs)
        for (int rep = 0; rep < 20; ++rep) {
            const Eigen::RowVectorXd x = g.matrix(1, 3);
            for (std::size_t u = 0; u < itr.grouping.internal_nodes.size(); ++u) {
                const auto& dn = itr.grouping.internal_nodes[u];
                if (dn.left.is_group) CHECK(latent_score(itr, x, dn.left.index + 1) == itr.rules[u].arm_score(x, true));
                if (dn.right.is_group) CHECK(latent_score(itr, x, dn.right.index + 1) == itr.rules[u].arm_score(x, false));
            }
            if (itr.rules[0].kind == NodeRule::Kind::Decision)
                CHECK(itr.rules[0].arm_score(x, true) == doctest::Approx(-itr.rules[0].arm_score(x, false)));
        }
    CHECK_THROWS_AS(latent_score(itrs[0], f.X.row(0), 0), ValidationError);
}

TEST_CASE("sub-ITRs on different groupings are rejected") {
    const auto f = random_fixture(7);
    auto itrs = members(f);
    CHECK_NOTHROW(check_common_grouping(itrs));
    const auto coarse = cut_tree(build_tree(f.rewards), 1, f.rewards);
    itrs.push_back(fit_tree_qlearning(f.rewards, coarse, f.X, {}));
    CHECK_THROWS_WITH(check_common_grouping(itrs), doctest::Contains("incompatible grouping"));
    CHECK_THROWS_AS(check_common_grouping({itrs[0]}), ValidationError);
}

TEST_CASE("fold labels") {
    const auto a = make_folds(23, 5, 9);
    CHECK(a == make_folds(23, 5, 9));
    CHECK(a != make_folds(23, 5, 10));
    std::vector<int> size(5, 0);
    for (int v : a) ++size[static_cast<std::size_t>(v)];
    CHECK(*std::min_element(size.begin(), size.end()) == 4);
    CHECK(*std::max_element(size.begin(), size.end()) == 5);
    CHECK_THROWS_AS(make_folds(3, 4, 0), ValidationError);
    CHECK_THROWS_AS(make_folds(3, 1, 0), ValidationError);
}

TEST_CASE("the cached objective matches a direct count") {
    const auto f = random_fixture(8, 40);
    const auto itrs = members(f);
    std::vector<const TreeItr*> ptrs;
    for (const auto& i : itrs) ptrs.push_back(&i);
    ScoreCache cache;
    for (Index j = 0; j < f.rewards.lines(); ++j)
        cache.add_line(ptrs, std::vector<Eigen::RowVectorXd>(3, f.X.row(j)), f.rewards, j);

    for (Index k = 0; k < 3; ++k) {
        const auto& itr = itrs[static_cast<std::size_t>(k)];
        double sum = 0.0, count = 0.0;
        for (Index j = 0; j < f.rewards.lines(); ++j)
            for (Index t : recommend(itr, f.X.row(j))) {
                const double r = f.rewards.reward(t, j);
                if (is_present(r)) {
                    sum += r;
                    count += 1.0;
                }
            }
        CHECK(cv_objective(cache, Eigen::VectorXd::Unit(3, k)) == doctest::Approx(sum / count).epsilon(1e-12));
    }

    SaConfig sa;
    sa.iterations = 300;
    sa.seed = 1;
    const auto search = anneal_weights(cache, sa);
    CHECK(search.objective >= search.vertex_objectives.maxCoeff());
    CHECK(search.objective == doctest::Approx(cv_objective(cache, search.weights)));
    CHECK(search.weights.sum() == doctest::Approx(1.0));
    const auto again = anneal_weights(cache, sa);
    CHECK(again.weights == search.weights);
}

TEST_CASE("fit_superlearner keeps the best of its vertices") {
    const auto f = random_fixture(11, 36);
    SlProblem p;
    for (int k = 0; k < 3; ++k) p.members.push_back({f.rewards, f.X, 0});
    p.observed = f.rewards;
    p.folds = 3;
    p.seed = 4;
    p.fit = [&](std::size_t member, const CenteredRewards& r, const Eigen::MatrixXd& X, std::uint64_t seed) {
        if (member == 2) return fit_tree_owl(r, f.grouping, X, {});
        QLearningOptions o;
        o.variant = member == 0 ? ItrVariant::QL1 : ItrVariant::QL2;
        o.seed = seed;
        return fit_tree_qlearning(r, f.grouping, X, o);
    };
    SaConfig sa;
    sa.iterations = 200;
    const auto sl = fit_superlearner(p, sa);
    CHECK(sl.sub_itrs.size() == 3);
    CHECK(sl.cv_objective >= sl.vertex_objectives.maxCoeff());
    CHECK(sl.weights.minCoeff() >= 0.0);
    CHECK(sl.weights.sum() == doctest::Approx(1.0));
}
