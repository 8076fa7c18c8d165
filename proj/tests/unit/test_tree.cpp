#include "../support.hpp"
#include "pdxitr/treatment_tree.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace pdxitr;

namespace {

// Average linkage from the definition: cluster distance = mean leaf-pair distance.
std::vector<double> brute_average_linkage(const Eigen::MatrixXd& rows) {
    const Index n = rows.rows();
    std::vector<std::vector<Index>> clusters;
    for (Index i = 0; i < n; ++i) clusters.push_back({i});
    std::vector<double> heights;
    while (clusters.size() > 1) {
        double best = INFINITY;
        std::size_t a = 0, b = 1;
        for (std::size_t i = 0; i < clusters.size(); ++i)
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                double s = 0.0;
                for (Index u : clusters[i])
                    for (Index v : clusters[j]) s += (rows.row(u) - rows.row(v)).norm();
                s /= static_cast<double>(clusters[i].size() * clusters[j].size());
                if (s < best) {
                    best = s;
                    a = i;
                    b = j;
                }
            }
        clusters[a].insert(clusters[a].end(), clusters[b].begin(), clusters[b].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(b));
        heights.push_back(best);
    }
    return heights;
}

Dendrogram four_leaf() {
    // A,B close; C,D further apart; the pairs far from each other.
    Eigen::MatrixXd rows(4, 2);
    rows << 0, 0, 0.1, 0, 10, 0, 10.5, 0;
    return cluster_rows(rows, {1, 2, 3, 4}, {"A", "B", "C", "D"});
}

PdxDataset small_dataset(std::uint64_t seed, Index P = 5, Index m = 8) {
    oracle::Gen g(seed);
    Eigen::MatrixXd y = g.matrix(P, m);
    return oracle::make_dataset(y, g.matrix(m, 3));
}

}  // namespace

TEST_CASE("standardize_and_center matches a direct recomputation") {
    const auto d = small_dataset(1);
    const auto c = standardize_and_center(d, 0);
    REQUIRE(c.null_group == std::vector<Index>{0});
    REQUIRE(c.active.size() == 4);
    const auto Y = assemble_response_matrix(d).values;
    for (Index k = 0; k < 4; ++k) {
        const Index t = c.active[static_cast<std::size_t>(k)];
        const double sd = std::sqrt((Y.row(t).array() - Y.row(t).mean()).square().sum() / (Y.cols() - 1));
        CHECK(c.scale(t) == doctest::Approx(sd).epsilon(1e-14));
        for (Index j = 0; j < Y.cols(); ++j)
            CHECK(c.R(k, j) == doctest::Approx(Y(t, j) / sd - Y(0, j) / c.scale(0)).epsilon(1e-12));
    }
    CHECK(c.null_R.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("centering subtracts the null mean") {
    // After scaling, treatment rows (1,2) with null mean (0.5,1.0) give (0.5,1.0).
    CenteredRewards c;
    c.active = {1};
    c.null_group = {0};
    c.R.resize(1, 2);
    c.R << 1.0 - 0.5, 2.0 - 1.0;
    CHECK(c.reward(1, 0) == 0.5);
    CHECK(c.reward(1, 1) == 1.0);
    CHECK_FALSE(is_present(c.reward(7, 0)));
}

TEST_CASE("c1 = 1 pulls the duplicate of the untreated arm into the null group") {
    auto d = small_dataset(2, 4, 10);
    for (auto& r : d.records)
        if (r.treatment.id == "T1") {
            for (const auto& u : d.records)
                if (u.line_id == r.line_id && u.treatment.is_untreated) r.response = 3.0 * u.response;
        }
    const auto c = standardize_and_center(d, 1);
    CHECK(c.null_group == std::vector<Index>{0, 1});
    CHECK(c.active == std::vector<Index>{2, 3});
    CHECK_THROWS_AS(standardize_and_center(d, 3), ValidationError);
}

TEST_CASE("a constant response vector is degenerate") {
    auto d = small_dataset(3);
    for (auto& r : d.records)
        if (r.treatment.id == "T2") r.response = 1.0;
    CHECK_THROWS_WITH(standardize_and_center(d, 0), doctest::Contains("degenerate response vector"));
}

TEST_CASE("apply_centering reproduces the training centering") {
    const auto d = small_dataset(4);
    const auto c = standardize_and_center(d, 1);
    const auto again = apply_centering(c.model(), d);
    CHECK((again.R - c.R).cwiseAbs().maxCoeff() == 0.0);
    const auto sub = select_lines(c, {2, 5});
    CHECK(sub.lines() == 2);
    CHECK(sub.R(0, 1) == c.R(0, 5));
    CHECK(sub.line_ids[0] == c.line_ids[2]);
}

TEST_CASE("masked_distance") {
    Eigen::RowVectorXd a(4), b(4);
    a << 1, 2, 3, 4;
    b << 2, 2, 5, 4;
    CHECK(masked_distance(a, b) == doctest::Approx(std::sqrt(5.0)));
    a(2) = kMissing;
    CHECK(masked_distance(a, b) == doctest::Approx(std::sqrt(1.0 * 4.0 / 3.0)));
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Constant(4, kMissing);
    CHECK_THROWS_AS(masked_distance(a, c), ValidationError);
}

TEST_CASE("identical reward rows merge first at height 0") {
    Eigen::MatrixXd rows(3, 2);
    rows << 1, 2, 5, 5, 1, 2;
    const auto d = cluster_rows(rows, {1, 2, 3}, {"a", "b", "c"});
    REQUIRE(d.merges.size() == 2);
    CHECK(d.merges[0].height == 0.0);
    CHECK(d.merges[0].left == 0);
    CHECK(d.merges[0].right == 2);
}

TEST_CASE("property: average linkage matches the definition and heights never decrease") {
    oracle::Gen g(5);
    for (int rep = 0; rep < 100; ++rep) {
        const Index n = g.integer(2, 8);
        const Eigen::MatrixXd rows = g.matrix(n, g.integer(1, 5));
        std::vector<Index> leaves;
        std::vector<std::string> labels;
        for (Index i = 0; i < n; ++i) {
            leaves.push_back(i);
            labels.push_back(std::to_string(i));
        }
        const auto d = cluster_rows(rows, leaves, labels);
        REQUIRE(static_cast<Index>(d.merges.size()) == n - 1);
        const auto want = brute_average_linkage(rows);
        for (std::size_t k = 0; k < want.size(); ++k) {
            CHECK(d.merges[k].height == doctest::Approx(want[k]).epsilon(1e-12));
            if (k > 0) CHECK(d.merges[k].height >= d.merges[k - 1].height - 1e-12);
        }
        CHECK(d.merges.back().size == n);
    }
}

TEST_CASE("cut_tree") {
    const auto d = four_leaf();
    SUBCASE("c2 = 1 undoes the root") {
        const auto g = cut_tree(d, 1);
        CHECK(g.groups == std::vector<std::vector<Index>>{{1, 2}, {3, 4}});
        REQUIRE(g.internal_nodes.size() == 1);
        CHECK(g.internal_nodes[0].left.is_group);
        CHECK(g.internal_nodes[0].right_groups == std::vector<int>{1});
    }
    SUBCASE("c2 = 2 also splits the higher pair") {
        const auto g = cut_tree(d, 2);
        CHECK(g.groups == std::vector<std::vector<Index>>{{1, 2}, {3}, {4}});
        REQUIRE(g.internal_nodes.size() == 2);
        CHECK_FALSE(g.internal_nodes[0].right.is_group);
        CHECK(g.internal_nodes[0].right.index == 1);
        CHECK(g.internal_nodes[0].right_groups == std::vector<int>{1, 2});
    }
    SUBCASE("c2 = P'-1 gives singletons") {
        const auto g = cut_tree(d, 3);
        CHECK(g.group_count() == 4);
        for (const auto& grp : g.groups) CHECK(grp.size() == 1);
    }
    CHECK_THROWS_AS(cut_tree(d, 0), ValidationError);
    CHECK_THROWS_AS(cut_tree(d, 4), ValidationError);
}

TEST_CASE("property: every cut is a partition whose nodes come root first") {
    oracle::Gen g(6);
    for (int rep = 0; rep < 50; ++rep) {
        const Index n = g.integer(2, 9);
        std::vector<Index> leaves;
        std::vector<std::string> labels;
        for (Index i = 0; i < n; ++i) {
            leaves.push_back(10 + i);
            labels.push_back("t" + std::to_string(i));
        }
        const auto d = cluster_rows(g.matrix(n, 3), leaves, labels);
        for (int c2 = 1; c2 < n; ++c2) {
            const auto cut = cut_tree(d, c2);
            CHECK(cut.group_count() == c2 + 1);
            CHECK(static_cast<int>(cut.internal_nodes.size()) == c2);
            std::multiset<Index> seen;
            for (const auto& grp : cut.groups) seen.insert(grp.begin(), grp.end());
            CHECK(seen == std::multiset<Index>(leaves.begin(), leaves.end()));
            for (std::size_t u = 0; u < cut.internal_nodes.size(); ++u)
                for (const auto& ch : {cut.internal_nodes[u].left, cut.internal_nodes[u].right})
                    if (!ch.is_group) CHECK(static_cast<std::size_t>(ch.index) > u);
        }
    }
}

TEST_CASE("group_rewards") {
    CenteredRewards c;
    c.treatments = {{"untreated", true}, {"T1", false}, {"T2", false}, {"T3", false}};
    c.active = {1, 2, 3};
    c.null_group = {0};
    c.R.resize(3, 2);
    c.R << 0.2, kMissing, 0.4, kMissing, 1.0, 0.7;
    c.null_R = Eigen::MatrixXd::Zero(1, 2);
    TreatmentGrouping grouping;
    grouping.groups = {{1, 2}, {3}};
    const auto G = group_rewards(c, grouping);
    CHECK(G(0, 0) == doctest::Approx(0.3));
    CHECK_FALSE(is_present(G(0, 1)));
    CHECK(G(1, 1) == 0.7);
}

TEST_CASE("dendrogram text round trip") {
    const auto d = four_leaf();
    std::stringstream ss;
    write_dendrogram(ss, d);
    const auto back = read_dendrogram(ss);
    CHECK(back.leaf_treatments == d.leaf_treatments);
    CHECK(back.labels == d.labels);
    REQUIRE(back.merges.size() == d.merges.size());
    for (std::size_t k = 0; k < d.merges.size(); ++k) {
        CHECK(back.merges[k].height == d.merges[k].height);
        CHECK(back.merges[k].left == d.merges[k].left);
    }
    std::stringstream bad("not a dendrogram\n");
    CHECK_THROWS_AS(read_dendrogram(bad), ValidationError);
}
