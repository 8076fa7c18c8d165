#include "pdxitr/superlearner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace pdxitr {

void SaConfig::validate() const {
    if (chains < 0) throw ValidationError("annealing chains must be >= 0");
    if (iterations < 0) throw ValidationError("annealing iterations must be >= 0");
    if (!(cooling > 0.0 && cooling < 1.0)) throw ValidationError("cooling factor must be in (0, 1)");
    if (!(step > 0.0)) throw ValidationError("annealing step must be positive");
}

double latent_score(const TreeItr& itr, const Eigen::Ref<const Eigen::RowVectorXd>& x, int group_code) {
    for (std::size_t u = 0; u < itr.grouping.internal_nodes.size(); ++u) {
        const auto& dn = itr.grouping.internal_nodes[u];
        if (dn.left.is_group && dn.left.index + 1 == group_code) return itr.rules[u].arm_score(x, true);
        if (dn.right.is_group && dn.right.index + 1 == group_code) return itr.rules[u].arm_score(x, false);
    }
    throw ValidationError("group " + std::to_string(group_code) + " is not mappable to a leaf group");
}

void check_common_grouping(const std::vector<TreeItr>& itrs) {
    if (itrs.size() < 2) throw ValidationError("a superlearner needs at least 2 sub-ITRs");
    const auto& ref = itrs.front().grouping;
    for (std::size_t m = 1; m < itrs.size(); ++m) {
        const auto& g = itrs[m].grouping;
        bool same = g.groups == ref.groups && g.null_group == ref.null_group &&
                    g.internal_nodes.size() == ref.internal_nodes.size();
        for (std::size_t u = 0; same && u < g.internal_nodes.size(); ++u) {
            const auto& a = g.internal_nodes[u];
            const auto& b = ref.internal_nodes[u];
            same = a.left.is_group == b.left.is_group && a.left.index == b.left.index &&
                   a.right.is_group == b.right.is_group && a.right.index == b.right.index;
        }
        if (!same) throw ValidationError("sub-ITR " + std::to_string(m) + " uses an incompatible grouping");
    }
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
    const Index n = v.size();
    if (n == 0) throw ValidationError("cannot project an empty vector");
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0, theta = 0.0;
    for (Index k = 0; k < n; ++k) {
        cumsum += u[static_cast<std::size_t>(k)];
        const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
        if (u[static_cast<std::size_t>(k)] - t > 0.0) theta = t;
    }
    Eigen::VectorXd w = (v.array() - theta).max(0.0).matrix();
    const double s = w.sum();
    if (s > 0.0) w /= s;
    return w;
}

namespace {

int descend_combined(const std::vector<DecisionNode>& nodes, const std::function<double(int)>& node_value) {
    int node = 0;
    for (;;) {
        const auto& dn = nodes[static_cast<std::size_t>(node)];
        const ChildRef& next = node_value(node) >= 0.0 ? dn.left : dn.right;
        if (next.is_group) return next.index + 1;
        node = next.index;
    }
}

}  // namespace

int SuperLearner::recommend_code(const std::vector<Eigen::RowVectorXd>& view_rows) const {
    auto row_of = [&](std::size_t m) -> const Eigen::RowVectorXd& {
        const auto v = static_cast<std::size_t>(views.empty() ? 0 : views[m]);
        if (v >= view_rows.size()) throw ValidationError("missing feature view for sub-ITR " + std::to_string(m));
        const auto& row = view_rows[v];
        if (row.size() != sub_itrs[m].feature_width)
            throw ValidationError("superlearner: feature width mismatch for sub-ITR " + std::to_string(m));
        return row;
    };
    double s0 = 0.0;
    for (std::size_t m = 0; m < sub_itrs.size(); ++m) s0 += weights(static_cast<Index>(m)) * sub_itrs[m].step0_score(row_of(m));
    if (!(s0 > 0.0)) return 0;
    return descend_combined(grouping().internal_nodes, [&](int node) {
        double s = 0.0;
        for (std::size_t m = 0; m < sub_itrs.size(); ++m) {
            const auto& rule = sub_itrs[m].rules[static_cast<std::size_t>(node)];
            const auto& x = row_of(m);
            s += weights(static_cast<Index>(m)) * (rule.arm_score(x, true) - rule.arm_score(x, false));
        }
        return s;
    });
}

int recommend_sl(const SuperLearner& sl, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    int max_view = 0;
    for (int v : sl.views) max_view = std::max(max_view, v);
    if (max_view > 0) throw ValidationError("superlearner uses several feature views; pass one row per view");
    return sl.recommend_code({Eigen::RowVectorXd(x)});
}

void ScoreCache::add_line(const std::vector<const TreeItr*>& itrs, const std::vector<Eigen::RowVectorXd>& member_rows,
                          const CenteredRewards& observed, Index line) {
    const auto M = static_cast<Index>(itrs.size());
    if (nodes.empty()) nodes = itrs.front()->grouping.internal_nodes;
    const auto& grouping = itrs.front()->grouping;
    Eigen::VectorXd s0(M);
    Eigen::MatrixXd diff(static_cast<Index>(nodes.size()), M);
    for (Index m = 0; m < M; ++m) {
        const auto& itr = *itrs[static_cast<std::size_t>(m)];
        const auto& x = member_rows[static_cast<std::size_t>(m)];
        s0(m) = itr.step0_score(x);
        for (std::size_t u = 0; u < nodes.size(); ++u)
            diff(static_cast<Index>(u), m) = itr.rules[u].arm_score(x, true) - itr.rules[u].arm_score(x, false);
    }
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(grouping.group_count() + 1);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(grouping.group_count() + 1);
    for (int code = 0; code <= grouping.group_count(); ++code)
        for (Index t : grouping.treatments_of(code)) {
            const double r = observed.reward(t, line);
            if (!is_present(r)) continue;
            sum(code) += r;
            count(code) += 1.0;
        }
    step0.push_back(std::move(s0));
    node_diff.push_back(std::move(diff));
    reward_sum.push_back(std::move(sum));
    reward_count.push_back(std::move(count));
}

int combined_code(const ScoreCache& cache, std::size_t line, const Eigen::VectorXd& w) {
    if (!(cache.step0[line].dot(w) > 0.0)) return 0;
    const auto& diff = cache.node_diff[line];
    return descend_combined(cache.nodes, [&](int node) { return diff.row(node).dot(w.transpose()); });
}

double cv_objective(const ScoreCache& cache, const Eigen::VectorXd& w) {
    double sum = 0.0, count = 0.0;
    for (std::size_t j = 0; j < cache.step0.size(); ++j) {
        const int code = combined_code(cache, j, w);
        sum += cache.reward_sum[j](code);
        count += cache.reward_count[j](code);
    }
    return count > 0.0 ? sum / count : -std::numeric_limits<double>::infinity();
}

WeightSearch anneal_weights(const ScoreCache& cache, const SaConfig& config) {
    config.validate();
    const Index M = cache.members();
    if (M < 1) throw ValidationError("score cache is empty");

    WeightSearch out;
    out.vertex_objectives.resize(M);
    for (Index m = 0; m < M; ++m) out.vertex_objectives(m) = cv_objective(cache, Eigen::VectorXd::Unit(M, m));

    double T0 = config.initial_temperature;
    if (!(T0 > 0.0)) {
        T0 = 0.0;
        for (Index m = 0; m < M; ++m)
            if (std::isfinite(out.vertex_objectives(m))) T0 = std::max(T0, 0.1 * std::abs(out.vertex_objectives(m)));
        if (!(T0 > 0.0)) T0 = 1e-3;
    }

    const std::size_t n_chains = static_cast<std::size_t>(M) + static_cast<std::size_t>(config.chains);
    std::vector<Eigen::VectorXd> best_w(n_chains);
    std::vector<double> best_obj(n_chains);
    parallel_for(n_chains, config.workers, [&](std::size_t c) {
        std::mt19937_64 rng(derive_seed(config.seed, c));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        Eigen::VectorXd w;
        if (c < static_cast<std::size_t>(M)) {
            w = Eigen::VectorXd::Unit(M, static_cast<Index>(c));
        } else {
            std::exponential_distribution<double> expo(1.0);
            w.resize(M);
            for (Index m = 0; m < M; ++m) w(m) = expo(rng);
            w /= w.sum();
        }
        double cur = cv_objective(cache, w);
        best_w[c] = w;
        best_obj[c] = cur;
        double T = T0;
        for (int it = 0; it < config.iterations; ++it) {
            Eigen::VectorXd prop = w;
            for (Index m = 0; m < M; ++m) prop(m) += config.step * normal(rng);
            prop = project_to_simplex(prop);
            const double val = cv_objective(cache, prop);
            const double u = unif(rng);
            if (val >= cur || (std::isfinite(val) && u < std::exp((val - cur) / T))) {
                w = prop;
                cur = val;
                if (cur > best_obj[c]) {
                    best_obj[c] = cur;
                    best_w[c] = w;
                }
            }
            T *= config.cooling;
        }
    });

    std::size_t best = 0;
    for (std::size_t c = 1; c < n_chains; ++c)
        if (best_obj[c] > best_obj[best]) best = c;
    out.weights = best_w[best];
    out.objective = best_obj[best];
    return out;
}

std::vector<int> make_folds(Index n, int k, std::uint64_t seed) {
    if (k < 2 || k > n)
        throw ValidationError("fold count " + std::to_string(k) + " must be in [2, " + std::to_string(n) + "]");
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < order.size(); ++i) fold[static_cast<std::size_t>(order[i])] = static_cast<int>(i % static_cast<std::size_t>(k));
    return fold;
}

SuperLearner fit_superlearner(const SlProblem& problem, const SaConfig& config) {
    config.validate();
    const std::size_t M = problem.members.size();
    if (M < 2) throw ValidationError("a superlearner needs at least 2 sub-ITRs");
    const Index n = problem.observed.lines();
    for (const auto& mem : problem.members)
        if (mem.rewards.lines() != n || mem.X.rows() != n)
            throw ValidationError("superlearner members must cover the same lines");

    const auto fold = make_folds(n, problem.folds, problem.seed);
    std::vector<std::vector<TreeItr>> fold_fits(static_cast<std::size_t>(problem.folds), std::vector<TreeItr>(M));
    std::vector<std::vector<Index>> train_lines(static_cast<std::size_t>(problem.folds));
    std::vector<std::vector<Index>> test_lines(static_cast<std::size_t>(problem.folds));
    for (Index j = 0; j < n; ++j)
        for (int f = 0; f < problem.folds; ++f)
            (fold[static_cast<std::size_t>(j)] == f ? test_lines : train_lines)[static_cast<std::size_t>(f)].push_back(j);

    parallel_for(static_cast<std::size_t>(problem.folds) * M, problem.workers, [&](std::size_t task) {
        const std::size_t f = task / M;
        const std::size_t m = task % M;
        const auto& mem = problem.members[m];
        const auto& lines = train_lines[f];
        fold_fits[f][m] = problem.fit(m, select_lines(mem.rewards, lines), mem.X(lines, Eigen::all),
                                      derive_seed(problem.seed, 1000 + task));
    });

    ScoreCache cache;
    for (int f = 0; f < problem.folds; ++f) {
        std::vector<const TreeItr*> itrs;
        for (const auto& itr : fold_fits[static_cast<std::size_t>(f)]) itrs.push_back(&itr);
        check_common_grouping(fold_fits[static_cast<std::size_t>(f)]);
        for (Index j : test_lines[static_cast<std::size_t>(f)]) {
            std::vector<Eigen::RowVectorXd> rows;
            for (const auto& mem : problem.members) rows.push_back(mem.X.row(j));
            cache.add_line(itrs, rows, problem.observed, j);
        }
    }

    const WeightSearch search = anneal_weights(cache, config);

    SuperLearner sl;
    sl.sub_itrs.resize(M);
    parallel_for(M, problem.workers, [&](std::size_t m) {
        const auto& mem = problem.members[m];
        sl.sub_itrs[m] = problem.fit(m, mem.rewards, mem.X, derive_seed(problem.seed, 5000 + m));
    });
    check_common_grouping(sl.sub_itrs);
    sl.weights = search.weights;
    sl.sa = config;
    for (const auto& mem : problem.members) sl.views.push_back(mem.view);
    sl.cv_objective = search.objective;
    sl.vertex_objectives = search.vertex_objectives;
    return sl;
}

}  // namespace pdxitr
