#include "pdxitr/treatment_tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace pdxitr {

double CenteredRewards::reward(Index treatment, Index line) const {
    for (std::size_t k = 0; k < active.size(); ++k)
        if (active[k] == treatment) return R(static_cast<Index>(k), line);
    for (std::size_t k = 0; k < null_group.size(); ++k)
        if (null_group[k] == treatment) return null_R(static_cast<Index>(k), line);
    return kMissing;
}

bool CenteredRewards::is_null(Index treatment) const {
    return std::find(null_group.begin(), null_group.end(), treatment) != null_group.end();
}

CenteringModel CenteredRewards::model() const { return {treatments, null_group, scale, c1}; }

CenteredRewards select_lines(const CenteredRewards& rewards, const std::vector<Index>& lines) {
    CenteredRewards out = rewards;
    out.line_ids.clear();
    for (Index j : lines) {
        if (j < 0 || j >= rewards.lines()) throw ValidationError("line index out of range");
        out.line_ids.push_back(rewards.line_ids[static_cast<std::size_t>(j)]);
    }
    out.R = rewards.R(Eigen::all, lines);
    out.null_R = rewards.null_R(Eigen::all, lines);
    out.null_mean = rewards.null_mean(lines);
    return out;
}

double masked_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    double sum = 0.0;
    Index shared = 0;
    for (Index k = 0; k < a.size(); ++k) {
        if (is_present(a(k)) && is_present(b(k))) {
            const double d = a(k) - b(k);
            sum += d * d;
            ++shared;
        }
    }
    if (shared == 0) throw ValidationError("no complete lines shared by two treatments");
    if (shared == a.size()) return std::sqrt(sum);
    return std::sqrt(sum * static_cast<double>(a.size()) / static_cast<double>(shared));
}

namespace {

Eigen::MatrixXd scaled_responses(const ResponseMatrix& Y, const Eigen::VectorXd& scale) {
    Eigen::MatrixXd out = Y.values;
    for (Index i = 0; i < out.rows(); ++i) out.row(i) /= scale(i);
    return out;
}

CenteredRewards center(const Eigen::MatrixXd& Ys, const PdxDataset& dataset, const CenteringModel& model) {
    CenteredRewards out;
    out.treatments = model.treatments;
    out.line_ids = dataset.features.line_ids;
    out.null_group = model.null_group;
    out.scale = model.scale;
    out.c1 = model.c1;
    const Index m = Ys.cols();

    out.null_mean = Eigen::VectorXd::Constant(m, kMissing);
    for (Index j = 0; j < m; ++j) {
        double s = 0.0;
        int cnt = 0;
        for (Index i : model.null_group)
            if (is_present(Ys(i, j))) {
                s += Ys(i, j);
                ++cnt;
            }
        if (cnt > 0) out.null_mean(j) = s / cnt;
    }
    for (Index i = 0; i < Ys.rows(); ++i)
        if (!out.is_null(i)) out.active.push_back(i);

    out.R.resize(static_cast<Index>(out.active.size()), m);
    for (std::size_t k = 0; k < out.active.size(); ++k)
        out.R.row(static_cast<Index>(k)) = Ys.row(out.active[k]) - out.null_mean.transpose();
    out.null_R.resize(static_cast<Index>(out.null_group.size()), m);
    for (std::size_t k = 0; k < out.null_group.size(); ++k)
        out.null_R.row(static_cast<Index>(k)) = Ys.row(out.null_group[k]) - out.null_mean.transpose();
    return out;
}

}  // namespace

CenteredRewards standardize_and_center(const PdxDataset& dataset, int c1) {
    require_valid(dataset);
    const auto untreated = dataset.untreated_index();
    if (!untreated) throw ValidationError("dataset has no untreated arm");
    if (c1 < 0 || c1 > dataset.P() - 2)
        throw ValidationError("c1 = " + std::to_string(c1) + " out of range [0, " + std::to_string(dataset.P() - 2) + "]");

    const auto Y = assemble_response_matrix(dataset);
    const Index P = Y.treatments();
    Eigen::VectorXd scale(P);
    for (Index i = 0; i < P; ++i) {
        double s = 0.0, s2 = 0.0;
        int cnt = 0;
        for (Index j = 0; j < Y.lines(); ++j)
            if (Y.present(i, j)) {
                s += Y.values(i, j);
                ++cnt;
            }
        const double mean = cnt > 0 ? s / cnt : 0.0;
        for (Index j = 0; j < Y.lines(); ++j)
            if (Y.present(i, j)) s2 += (Y.values(i, j) - mean) * (Y.values(i, j) - mean);
        const double sd = cnt > 1 ? std::sqrt(s2 / (cnt - 1)) : 0.0;
        if (!(sd > 0.0))
            throw ValidationError("degenerate response vector for treatment '" +
                                  dataset.treatments[static_cast<std::size_t>(i)].id + "'");
        scale(i) = sd;
    }
    const Eigen::MatrixXd Ys = scaled_responses(Y, scale);

    std::vector<std::pair<double, Index>> neighbours;
    for (Index i = 0; i < P; ++i)
        if (i != *untreated) neighbours.push_back({masked_distance(Ys.row(*untreated), Ys.row(i)), i});
    std::stable_sort(neighbours.begin(), neighbours.end());

    CenteringModel model;
    model.treatments = dataset.treatments;
    model.scale = scale;
    model.c1 = c1;
    model.null_group.push_back(*untreated);
    for (int k = 0; k < c1; ++k) model.null_group.push_back(neighbours[static_cast<std::size_t>(k)].second);
    return center(Ys, dataset, model);
}

CenteredRewards apply_centering(const CenteringModel& model, const PdxDataset& dataset) {
    if (dataset.treatments != model.treatments)
        throw ValidationError("centering model and dataset have different treatment lists");
    const auto Y = assemble_response_matrix(dataset);
    return center(scaled_responses(Y, model.scale), dataset, model);
}

Dendrogram cluster_rows(const Eigen::MatrixXd& rows, std::vector<Index> leaf_treatments,
                        std::vector<std::string> labels) {
    const Index n = rows.rows();
    if (n < 2) throw ValidationError("clustering needs at least two treatments");
    Dendrogram dend;
    dend.leaf_treatments = std::move(leaf_treatments);
    dend.labels = std::move(labels);

    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) D(i, j) = D(j, i) = masked_distance(rows.row(i), rows.row(j));

    // Active clusters are kept sorted by their smallest leaf.
    struct Cluster {
        Index node;
        Index min_leaf;
        Index size;
        Index slot;  // row/column of D
    };
    std::vector<Cluster> active;
    for (Index i = 0; i < n; ++i) active.push_back({i, i, 1, i});

    for (Index step = 0; step + 1 < n; ++step) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 1;
        for (std::size_t a = 0; a < active.size(); ++a)
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                const double d = D(active[a].slot, active[b].slot);
                if (d < best) {
                    best = d;
                    bi = a;
                    bj = b;
                }
            }
        const Cluster left = active[bi], right = active[bj];
        dend.merges.push_back({left.node, right.node, best, left.size + right.size});
        for (const auto& c : active) {
            if (c.slot == left.slot || c.slot == right.slot) continue;
            const double d = (static_cast<double>(left.size) * D(left.slot, c.slot) +
                              static_cast<double>(right.size) * D(right.slot, c.slot)) /
                             static_cast<double>(left.size + right.size);
            D(left.slot, c.slot) = D(c.slot, left.slot) = d;
        }
        active[bi] = {n + step, left.min_leaf, left.size + right.size, left.slot};
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    return dend;
}

Dendrogram build_tree(const CenteredRewards& rewards) {
    if (rewards.R.rows() < 2) throw ValidationError("build_tree: fewer than two non-null treatments");
    std::vector<std::string> labels;
    for (Index i : rewards.active) labels.push_back(rewards.treatments[static_cast<std::size_t>(i)].id);
    return cluster_rows(rewards.R, rewards.active, std::move(labels));
}

int TreatmentGrouping::group_code_of(Index treatment) const {
    if (std::find(null_group.begin(), null_group.end(), treatment) != null_group.end()) return 0;
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (std::find(groups[g].begin(), groups[g].end(), treatment) != groups[g].end()) return static_cast<int>(g) + 1;
    return -1;
}

const std::vector<Index>& TreatmentGrouping::treatments_of(int code) const {
    if (code == 0) return null_group;
    if (code < 1 || code > group_count()) throw ValidationError("group code out of range");
    return groups[static_cast<std::size_t>(code - 1)];
}

TreatmentGrouping cut_tree(const Dendrogram& dendrogram, int c2) {
    const Index n = dendrogram.leaves();
    if (c2 < 1 || c2 > n - 1)
        throw ValidationError("c2 = " + std::to_string(c2) + " out of range [1, " + std::to_string(n - 1) + "]");
    if (static_cast<Index>(dendrogram.merges.size()) != n - 1) throw ValidationError("malformed dendrogram");

    const Index first_undone = n - 1 - c2;  // merge indices >= this are undone
    auto is_undone = [&](Index node) { return node >= n && node - n >= first_undone; };

    TreatmentGrouping out;
    out.c2 = c2;
    std::vector<Index> node_order;  // merges above the cut, descending (root first)
    for (Index k = n - 2; k >= first_undone; --k) node_order.push_back(n + k);
    auto node_slot = [&](Index node) {
        return static_cast<int>(std::find(node_order.begin(), node_order.end(), node) - node_order.begin());
    };
    out.internal_nodes.resize(node_order.size());

    std::function<void(Index, std::vector<Index>&)> collect = [&](Index node, std::vector<Index>& leaves) {
        if (node < n) {
            leaves.push_back(dendrogram.leaf_treatments[static_cast<std::size_t>(node)]);
            return;
        }
        const auto& mg = dendrogram.merges[static_cast<std::size_t>(node - n)];
        collect(mg.left, leaves);
        collect(mg.right, leaves);
    };

    // Depth-first, left before right, so group indices follow leaf order.
    std::function<std::vector<int>(Index)> visit = [&](Index node) -> std::vector<int> {
        const int slot = node_slot(node);
        const auto& mg = dendrogram.merges[static_cast<std::size_t>(node - n)];
        DecisionNode dn;
        dn.merge = node - n;
        std::vector<int> all;
        for (int side = 0; side < 2; ++side) {
            const Index child = side == 0 ? mg.left : mg.right;
            ChildRef ref;
            std::vector<int> groups;
            if (is_undone(child)) {
                ref = {false, node_slot(child)};
                groups = visit(child);
            } else {
                std::vector<Index> leaves;
                collect(child, leaves);
                std::sort(leaves.begin(), leaves.end());
                out.groups.push_back(std::move(leaves));
                ref = {true, static_cast<int>(out.groups.size()) - 1};
                groups = {ref.index};
            }
            (side == 0 ? dn.left : dn.right) = ref;
            (side == 0 ? dn.left_groups : dn.right_groups) = groups;
            all.insert(all.end(), groups.begin(), groups.end());
        }
        out.internal_nodes[static_cast<std::size_t>(slot)] = std::move(dn);
        return all;
    };
    visit(n + (n - 2));
    return out;
}

TreatmentGrouping cut_tree(const Dendrogram& dendrogram, int c2, const CenteredRewards& rewards) {
    TreatmentGrouping out = cut_tree(dendrogram, c2);
    out.null_group = rewards.null_group;
    out.treatments = rewards.treatments;
    out.c1 = rewards.c1;
    return out;
}

double mean_reward(const CenteredRewards& rewards, const std::vector<Index>& treatments, Index line) {
    double s = 0.0;
    int cnt = 0;
    for (Index i : treatments) {
        const double r = rewards.reward(i, line);
        if (is_present(r)) {
            s += r;
            ++cnt;
        }
    }
    return cnt > 0 ? s / cnt : kMissing;
}

Eigen::MatrixXd group_rewards(const CenteredRewards& rewards, const TreatmentGrouping& grouping) {
    Eigen::MatrixXd out(grouping.group_count(), rewards.lines());
    for (int g = 0; g < grouping.group_count(); ++g)
        for (Index j = 0; j < rewards.lines(); ++j)
            out(g, j) = mean_reward(rewards, grouping.groups[static_cast<std::size_t>(g)], j);
    return out;
}

void write_dendrogram(std::ostream& os, const Dendrogram& dendrogram) {
    os << "# pdxitr-dendrogram v1\n";
    os << "leaves\t" << dendrogram.leaves() << "\n";
    for (Index i = 0; i < dendrogram.leaves(); ++i)
        os << "leaf\t" << i << "\t" << dendrogram.leaf_treatments[static_cast<std::size_t>(i)] << "\t"
           << dendrogram.labels[static_cast<std::size_t>(i)] << "\n";
    os << std::setprecision(17);
    for (std::size_t k = 0; k < dendrogram.merges.size(); ++k) {
        const auto& mg = dendrogram.merges[k];
        os << "merge\t" << k << "\t" << mg.left << "\t" << mg.right << "\t" << mg.height << "\t" << mg.size << "\n";
    }
}

Dendrogram read_dendrogram(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "# pdxitr-dendrogram v1")
        throw ValidationError("not a pdxitr dendrogram (missing version header)");
    Dendrogram d;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "leaves") {
            Index n;
            ls >> n;
            d.leaf_treatments.resize(static_cast<std::size_t>(n));
            d.labels.resize(static_cast<std::size_t>(n));
        } else if (tag == "leaf") {
            Index i, t;
            std::string label;
            ls >> i >> t;
            ls.ignore(1);
            std::getline(ls, label);
            d.leaf_treatments.at(static_cast<std::size_t>(i)) = t;
            d.labels.at(static_cast<std::size_t>(i)) = label;
        } else if (tag == "merge") {
            std::size_t k;
            Merge mg;
            ls >> k >> mg.left >> mg.right >> mg.height >> mg.size;
            if (k != d.merges.size()) throw ValidationError("dendrogram merges out of order");
            d.merges.push_back(mg);
        } else {
            throw ValidationError("unknown dendrogram record '" + tag + "'");
        }
        if (ls.fail()) throw ValidationError("malformed dendrogram line: " + line);
    }
    return d;
}

}  // namespace pdxitr
