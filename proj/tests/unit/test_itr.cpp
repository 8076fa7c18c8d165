#include "../support.hpp"
#include "pdxitr/itr.hpp"
#include "pdxitr/synthetic.hpp"

#include <doctest.h>

using namespace pdxitr;

namespace {

// Rewards for treatments 1..k (rows of R); treatment 0 is the null group.
CenteredRewards rewards_from(const Eigen::MatrixXd& R) {
    CenteredRewards c;
    c.treatments.push_back({"untreated", true});
    for (Index t = 0; t < R.rows(); ++t) {
        c.treatments.push_back({"T" + std::to_string(t + 1), false});
        c.active.push_back(t + 1);
    }
    for (Index j = 0; j < R.cols(); ++j) c.line_ids.push_back("L" + std::to_string(j));
    c.null_group = {0};
    c.R = R;
    c.null_R = Eigen::MatrixXd::Zero(1, R.cols());
    c.null_mean = Eigen::VectorXd::Zero(R.cols());
    c.scale = Eigen::VectorXd::Ones(R.rows() + 1);
    return c;
}

TreatmentGrouping two_groups() {
    TreatmentGrouping g;
    g.groups = {{1}, {2}};
    g.null_group = {0};
    DecisionNode root;
    root.left = {true, 0};
    root.right = {true, 1};
    root.left_groups = {0};
    root.right_groups = {1};
    g.internal_nodes = {root};
    g.treatments = {{"untreated", true}, {"T1", false}, {"T2", false}};
    g.c2 = 1;
    return g;
}

Regressor constant(double c, Index width) {
    Regressor r;
    r.linear.intercept = c;
    r.linear.coefficients = Eigen::VectorXd::Zero(width);
    return r;
}

Regressor slope(Index feature, double b, Index width, double c = 0.0) {
    Regressor r = constant(c, width);
    r.linear.coefficients(feature) = b;
    return r;
}

}  // namespace

TEST_CASE("Q-learning without feature signal picks the better arm everywhere") {
    oracle::Gen g(1);
    const Index m = 30;
    const Eigen::MatrixXd X = g.matrix(m, 4);
    Eigen::MatrixXd R(2, m);
    for (Index j = 0; j < m; ++j) {
        R(0, j) = 1.0 + g.normal(0.05);
        R(1, j) = 0.2 + g.normal(0.05);
    }
    QLearningOptions o;
    o.learner.lambda_ratio = 1.0;
    const auto itr = fit_tree_qlearning(rewards_from(R), two_groups(), X, o);
    const Eigen::MatrixXd T = g.matrix(50, 4);
    for (Index i = 0; i < 50; ++i) CHECK(recommend(itr, T.row(i)) == std::vector<Index>{1});
}

TEST_CASE("negative rewards everywhere send every line to the null group") {
    oracle::Gen g(2);
    const Eigen::MatrixXd X = g.matrix(20, 3);
    Eigen::MatrixXd R = -(g.matrix(2, 20).cwiseAbs().array() + 0.1).matrix();
    for (auto variant : {ItrVariant::QL1, ItrVariant::QL2}) {
        QLearningOptions o;
        o.variant = variant;
        const auto itr = fit_tree_qlearning(rewards_from(R), two_groups(), X, o);
        for (Index i = 0; i < 20; ++i) CHECK(itr.recommend_code(X.row(i)) == 0);
    }
}

TEST_CASE("an arm with no observations cannot be fitted") {
    Eigen::MatrixXd R(2, 5);
    R.row(0).setOnes();
    R.row(1).setConstant(kMissing);
    oracle::Gen g(3);
    CHECK_THROWS_WITH(fit_tree_qlearning(rewards_from(R), two_groups(), g.matrix(5, 2), {}),
                      doctest::Contains("unfittable node"));
}

TEST_CASE("Q-learning recovers a sign rule on held-out lines") {
    SyntheticConfig cfg;
    cfg.lines = 60;
    cfg.treatments = 2;
    cfg.features = 5;
    cfg.sigma = 0.1;
    cfg.seed = 4;
    cfg.class_of = {0, 1};
    Eigen::VectorXd b = Eigen::VectorXd::Zero(5);
    b(0) = 1.0;
    cfg.class_effects = {EffectFunction::linear(1.0, b), EffectFunction::linear(1.0, -b)};
    const auto [data, truth] = generate(cfg);
    const auto rewards = standardize_and_center(data, 0);
    const auto grouping = cut_tree(build_tree(rewards), 1, rewards);
    const auto itr = fit_tree_qlearning(rewards, grouping, data.features.values, {});

    oracle::Gen g(5);
    const Eigen::MatrixXd T = g.matrix(400, 5);
    int correct = 0;
    for (Index i = 0; i < T.rows(); ++i) {
        const auto& rec = recommend(itr, T.row(i));
        const Index want = T(i, 0) > 0 ? 1 : 2;
        correct += rec.size() == 1 && rec[0] == want;
    }
    CHECK(correct >= 360);
}

TEST_CASE("OWL with identical arm rewards has a near-zero margin") {
    oracle::Gen g(6);
    const Eigen::MatrixXd X = g.matrix(20, 2);
    Eigen::MatrixXd R(2, 20);
    for (Index j = 0; j < 20; ++j) R(0, j) = R(1, j) = g.uniform(0.5, 1.5);
    const auto itr = fit_tree_owl(rewards_from(R), two_groups(), X, {});
    for (Index i = 0; i < 20; ++i) CHECK(std::abs(itr.rules[0].margin(X.row(i))) < 1e-6);
}

TEST_CASE("OWL separates an arm preference given by the sign of x1") {
    oracle::Gen g(7);
    const Index m = 40;
    Eigen::MatrixXd X = g.matrix(m, 3);
    for (Index j = 0; j < m; ++j) X(j, 0) += X(j, 0) > 0 ? 0.5 : -0.5;
    Eigen::MatrixXd R(2, m);
    for (Index j = 0; j < m; ++j) {
        R(0, j) = X(j, 0) > 0 ? 1.0 : -1.0;
        R(1, j) = -R(0, j);
    }
    for (auto kernel : {KernelKind::Linear, KernelKind::Gaussian}) {
        OwlOptions o;
        o.kernel = kernel;
        o.lambda = 1e-4;
        const auto itr = fit_tree_owl(rewards_from(R), two_groups(), X, o);
        int correct = 0;
        for (Index j = 0; j < m; ++j) correct += itr.rules[0].goes_left(X.row(j)) == (X(j, 0) > 0);
        CHECK(correct == m);
    }
}

TEST_CASE("recommend follows step 0 and then the node rules") {
    TreeItr itr;
    itr.grouping = two_groups();
    itr.feature_width = 2;
    itr.rules.resize(1);
    itr.rules[0].left = constant(1.0, 2);
    itr.rules[0].right = constant(0.0, 2);

    itr.step0 = constant(-1.0, 2);
    CHECK(recommend(itr, Eigen::RowVector2d(5, 5)) == std::vector<Index>{0});
    itr.step0 = constant(0.0, 2);
    CHECK(itr.recommend_code(Eigen::RowVector2d(1, 1)) == 0);
    itr.step0 = constant(0.5, 2);
    CHECK(recommend(itr, Eigen::RowVector2d(-3, 9)) == std::vector<Index>{1});
    CHECK_THROWS_AS(itr.recommend_code(Eigen::RowVector3d(0, 0, 0)), ValidationError);
}

TEST_CASE("a two-node path matches a hand trace") {
    // root: group {1} on the left, node 1 on the right; node 1: {2} vs {3}.
    TreeItr itr;
    itr.grouping.groups = {{1}, {2}, {3}};
    itr.grouping.null_group = {0};
    DecisionNode root, child;
    root.left = {true, 0};
    root.right = {false, 1};
    root.left_groups = {0};
    root.right_groups = {1, 2};
    child.left = {true, 1};
    child.right = {true, 2};
    child.left_groups = {1};
    child.right_groups = {2};
    itr.grouping.internal_nodes = {root, child};
    itr.feature_width = 2;
    itr.step0 = constant(1.0, 2);
    itr.rules.resize(2);
    itr.rules[0].left = slope(0, 1.0, 2);   // left when x1 >= 0
    itr.rules[0].right = constant(0.0, 2);
    itr.rules[1].left = slope(1, 1.0, 2);   // then {2} when x2 >= 0
    itr.rules[1].right = constant(0.0, 2);

    oracle::Gen g(8);
    for (int rep = 0; rep < 100; ++rep) {
        const Eigen::RowVector2d x(g.normal(), g.normal());
        const int want = x(0) >= 0 ? 1 : (x(1) >= 0 ? 2 : 3);
        CHECK(itr.recommend_code(x) == want);
    }
}

TEST_CASE("property: QL1 node rules agree with their arm predictions") {
    oracle::Gen g(9);
    for (int rep = 0; rep < 10; ++rep) {
        const Index m = g.integer(15, 40);
        const Eigen::MatrixXd X = g.matrix(m, 3);
        const Eigen::MatrixXd R = g.matrix(4, m);
        const auto rewards = rewards_from(R);
        const auto grouping = cut_tree(build_tree(rewards), g.integer(1, 3), rewards);
        QLearningOptions o;
        o.variant = rep % 2 ? ItrVariant::QL2 : ItrVariant::QL1;
        o.learner.kind = rep % 3 ? RegressorKind::Lasso : RegressorKind::Forest;
        o.learner.forest.n_trees = 10;
        o.seed = static_cast<std::uint64_t>(rep);
        const auto itr = fit_tree_qlearning(rewards, grouping, X, o);
        REQUIRE(itr.rules.size() == grouping.internal_nodes.size());
        for (Index j = 0; j < m; ++j) {
            const int code = itr.recommend_code(X.row(j));
            CHECK(code >= 0);
            CHECK(code <= grouping.group_count());
            const auto& rule = itr.rules[0];
            CHECK(rule.goes_left(X.row(j)) == (rule.arm_score(X.row(j), true) >= rule.arm_score(X.row(j), false)));
        }
    }
}

TEST_CASE("flat design rows") {
    const Eigen::RowVector2d x(2, 3);
    CHECK(flat_design_row(RegressorKind::Forest, x, 1, 3) == Eigen::RowVectorXd((Eigen::RowVectorXd(5) << 2, 3, 0, 1, 0).finished()));
    const auto lasso = flat_design_row(RegressorKind::Lasso, x, 2, 3);
    REQUIRE(lasso.size() == 2 + 3 + 6);
    CHECK(lasso(4) == 1.0);
    CHECK(lasso.tail(6) == Eigen::RowVectorXd((Eigen::RowVectorXd(6) << 0, 0, 0, 0, 2, 3).finished()));
}

TEST_CASE("off-the-shelf ITR") {
    oracle::Gen g(10);
    const Index m = 40;
    const Eigen::MatrixXd X = g.matrix(m, 3);

    SUBCASE("a uniformly best treatment is always recommended") {
        Eigen::MatrixXd R(3, m);
        for (Index j = 0; j < m; ++j) {
            R(0, j) = 0.2 + g.normal(0.05);
            R(1, j) = 2.0 + g.normal(0.05);
            R(2, j) = -0.3 + g.normal(0.05);
        }
        for (auto kind : {RegressorKind::Lasso, RegressorKind::Forest}) {
            const auto flat = fit_off_the_shelf(rewards_from(R), X, {kind, 0.05, {}}, 3);
            CHECK(flat.treatments == std::vector<Index>{0, 1, 2, 3});
            for (Index j = 0; j < m; ++j) CHECK(flat.recommend_treatment(X.row(j)) == 2);
        }
    }
    SUBCASE("ties go to the lower index and the pick is the argmax") {
        FlatItr flat;
        flat.kind = RegressorKind::Lasso;
        flat.treatments = {0, 1, 2};
        flat.feature_width = 3;
        flat.model = constant(0.4, 3 + 3 + 9);
        CHECK(flat.recommend_treatment(X.row(0)) == 0);

        Eigen::MatrixXd R = g.matrix(2, m);
        const auto rf = fit_off_the_shelf(rewards_from(R), X, {RegressorKind::Forest, 0.1, ForestParams{20}}, 4);
        for (Index j = 0; j < m; ++j) {
            Index best;
            rf.predicted_rewards(X.row(j)).maxCoeff(&best);
            CHECK(rf.recommend_treatment(X.row(j)) == rf.treatments[static_cast<std::size_t>(best)]);
        }
    }
}
