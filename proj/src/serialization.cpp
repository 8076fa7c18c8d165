#include "pdxitr/serialization.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace pdxitr {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    void line(const std::string& key, const std::vector<std::string>& fields = {}) {
        os_ << key;
        for (const auto& f : fields) os_ << '\t' << f;
        os_ << '\n';
    }
    void num(const std::string& key, double v) { line(key, {fmt(v)}); }
    void integer(const std::string& key, long long v) { line(key, {std::to_string(v)}); }
    template <typename Vec>
    void vec(const std::string& key, const Vec& v) {
        std::vector<std::string> f{std::to_string(v.size())};
        for (Index i = 0; i < v.size(); ++i) f.push_back(fmt(v(i)));
        line(key, f);
    }
    void indices(const std::string& key, const std::vector<Index>& v) {
        std::vector<std::string> f{std::to_string(v.size())};
        for (Index i : v) f.push_back(std::to_string(i));
        line(key, f);
    }
    void ints(const std::string& key, const std::vector<int>& v) {
        std::vector<std::string> f{std::to_string(v.size())};
        for (int i : v) f.push_back(std::to_string(i));
        line(key, f);
    }
    void strings(const std::string& key, const std::vector<std::string>& v) {
        std::vector<std::string> f{std::to_string(v.size())};
        f.insert(f.end(), v.begin(), v.end());
        line(key, f);
    }
    void matrix(const std::string& key, const Eigen::MatrixXd& m) {
        std::vector<std::string> f{std::to_string(m.rows()), std::to_string(m.cols())};
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) f.push_back(fmt(m(i, j)));
        line(key, f);
    }

private:
    std::ostream& os_;
};

class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    std::vector<std::string> fields(const std::string& key) {
        std::string line;
        if (!std::getline(is_, line)) throw ValidationError("model file truncated: expected '" + key + "'");
        ++line_no_;
        std::vector<std::string> parts;
        std::stringstream ss(line);
        std::string part;
        while (std::getline(ss, part, '\t')) parts.push_back(part);
        if (line.empty() || line.back() == '\t') parts.push_back("");
        if (parts.empty() || parts[0] != key)
            throw ValidationError("model file line " + std::to_string(line_no_) + ": expected '" + key + "'");
        parts.erase(parts.begin());
        return parts;
    }
    std::string word(const std::string& key) { return fields(key).at(0); }
    double num(const std::string& key) { return to_double(word(key)); }
    long long integer(const std::string& key) { return std::stoll(word(key)); }
    void header(const std::string& tag) {
        std::string line;
        if (!std::getline(is_, line) || line != tag) throw ValidationError("expected header '" + tag + "'");
        ++line_no_;
    }
    Eigen::VectorXd vec(const std::string& key) {
        const auto f = fields(key);
        const auto n = counted(f, key);
        Eigen::VectorXd v(static_cast<Index>(n));
        for (std::size_t i = 0; i < n; ++i) v(static_cast<Index>(i)) = to_double(f[i + 1]);
        return v;
    }
    std::vector<Index> indices(const std::string& key) {
        const auto f = fields(key);
        const auto n = counted(f, key);
        std::vector<Index> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back(std::stoll(f[i + 1]));
        return v;
    }
    std::vector<int> ints(const std::string& key) {
        const auto f = fields(key);
        const auto n = counted(f, key);
        std::vector<int> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back(std::stoi(f[i + 1]));
        return v;
    }
    std::vector<std::string> strings(const std::string& key) {
        const auto f = fields(key);
        const auto n = counted(f, key);
        return {f.begin() + 1, f.begin() + 1 + static_cast<std::ptrdiff_t>(n)};
    }
    Eigen::MatrixXd matrix(const std::string& key) {
        const auto f = fields(key);
        if (f.size() < 2) throw ValidationError("malformed matrix '" + key + "'");
        const Index r = std::stoll(f[0]), c = std::stoll(f[1]);
        if (static_cast<Index>(f.size()) != 2 + r * c) throw ValidationError("malformed matrix '" + key + "'");
        Eigen::MatrixXd m(r, c);
        for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < c; ++j) m(i, j) = to_double(f[static_cast<std::size_t>(2 + i * c + j)]);
        return m;
    }

private:
    static double to_double(const std::string& s) { return std::stod(s); }
    static std::size_t counted(const std::vector<std::string>& f, const std::string& key) {
        if (f.empty()) throw ValidationError("malformed list '" + key + "'");
        const auto n = static_cast<std::size_t>(std::stoll(f[0]));
        if (f.size() != n + 1) throw ValidationError("malformed list '" + key + "'");
        return n;
    }
    std::istream& is_;
    long line_no_ = 0;
};

// --- learners --------------------------------------------------------------

void put_forest_params(Writer& w, const ForestParams& p) {
    w.line("forest_params", {std::to_string(p.n_trees), std::to_string(p.min_leaf), std::to_string(p.max_depth),
                             fmt(p.feature_fraction), p.bootstrap ? "1" : "0"});
}

ForestParams get_forest_params(Reader& r) {
    const auto f = r.fields("forest_params");
    if (f.size() != 5) throw ValidationError("malformed forest_params");
    return {std::stoi(f[0]), std::stoi(f[1]), std::stoi(f[2]), std::stod(f[3]), f[4] == "1"};
}

void put_regressor(Writer& w, const Regressor& reg) {
    if (reg.kind == RegressorKind::Lasso) {
        w.line("regressor", {"lasso"});
        w.num("intercept", reg.linear.intercept);
        w.num("lambda", reg.linear.lambda);
        w.vec("coefficients", reg.linear.coefficients);
        return;
    }
    w.line("regressor", {"forest"});
    put_forest_params(w, reg.forest.params);
    w.line("seed", {std::to_string(reg.forest.seed)});
    w.integer("n_features", reg.forest.n_features);
    w.integer("trees", static_cast<long long>(reg.forest.trees.size()));
    for (const auto& t : reg.forest.trees) {
        std::vector<std::string> f{std::to_string(t.nodes.size())};
        for (const auto& n : t.nodes) {
            f.push_back(std::to_string(n.feature));
            f.push_back(fmt(n.threshold));
            f.push_back(std::to_string(n.left));
            f.push_back(std::to_string(n.right));
            f.push_back(fmt(n.value));
        }
        w.line("tree", f);
    }
}

Regressor get_regressor(Reader& r) {
    Regressor reg;
    const auto kind = r.word("regressor");
    if (kind == "lasso") {
        reg.kind = RegressorKind::Lasso;
        reg.linear.intercept = r.num("intercept");
        reg.linear.lambda = r.num("lambda");
        reg.linear.coefficients = r.vec("coefficients");
        return reg;
    }
    if (kind != "forest") throw ValidationError("unknown regressor kind '" + kind + "'");
    reg.kind = RegressorKind::Forest;
    reg.forest.params = get_forest_params(r);
    reg.forest.seed = std::stoull(r.word("seed"));
    reg.forest.n_features = r.integer("n_features");
    const auto n_trees = r.integer("trees");
    for (long long k = 0; k < n_trees; ++k) {
        const auto f = r.fields("tree");
        const auto n = static_cast<std::size_t>(std::stoll(f.at(0)));
        if (f.size() != 1 + 5 * n) throw ValidationError("malformed tree record");
        RegressionTree t;
        for (std::size_t i = 0; i < n; ++i) {
            RegressionTree::Node node;
            node.feature = std::stoi(f[1 + 5 * i]);
            node.threshold = std::stod(f[2 + 5 * i]);
            node.left = std::stoi(f[3 + 5 * i]);
            node.right = std::stoi(f[4 + 5 * i]);
            node.value = std::stod(f[5 + 5 * i]);
            t.nodes.push_back(node);
        }
        reg.forest.trees.push_back(std::move(t));
    }
    return reg;
}

void put_decision(Writer& w, const DecisionFunction& d) {
    w.line("decision", {d.kind == KernelKind::Linear ? "linear" : "gaussian"});
    w.num("lambda", d.lambda);
    w.num("bias", d.bias);
    w.num("bandwidth", d.bandwidth);
    w.num("penalty", d.penalty);
    w.vec("center", d.center);
    w.vec("scale", d.scale);
    w.vec("weights", d.weights);
    w.matrix("support", d.support);
    w.vec("coef", d.coef);
}

DecisionFunction get_decision(Reader& r) {
    DecisionFunction d;
    const auto kind = r.word("decision");
    if (kind != "linear" && kind != "gaussian") throw ValidationError("unknown kernel '" + kind + "'");
    d.kind = kind == "linear" ? KernelKind::Linear : KernelKind::Gaussian;
    d.lambda = r.num("lambda");
    d.bias = r.num("bias");
    d.bandwidth = r.num("bandwidth");
    d.penalty = r.num("penalty");
    d.center = r.vec("center").transpose();
    d.scale = r.vec("scale").transpose();
    d.weights = r.vec("weights");
    d.support = r.matrix("support");
    d.coef = r.vec("coef");
    return d;
}

// --- grouping ----------------------------------------------------------------

void put_treatments(Writer& w, const std::vector<TreatmentId>& ts) {
    w.integer("treatments", static_cast<long long>(ts.size()));
    for (const auto& t : ts) w.line("treatment", {t.is_untreated ? "untreated" : "treated", t.id});
}

std::vector<TreatmentId> get_treatments(Reader& r) {
    const auto n = r.integer("treatments");
    std::vector<TreatmentId> out;
    for (long long k = 0; k < n; ++k) {
        const auto f = r.fields("treatment");
        if (f.size() != 2) throw ValidationError("malformed treatment record");
        out.push_back({f[1], f[0] == "untreated"});
    }
    return out;
}

void put_grouping(Writer& w, const TreatmentGrouping& g) {
    put_treatments(w, g.treatments);
    w.integer("c1", g.c1);
    w.integer("c2", g.c2);
    w.indices("null_group", g.null_group);
    w.integer("groups", g.group_count());
    for (const auto& grp : g.groups) w.indices("group", grp);
    w.integer("nodes", static_cast<long long>(g.internal_nodes.size()));
    for (const auto& n : g.internal_nodes) {
        w.line("node", {std::to_string(n.merge), n.left.is_group ? "group" : "node", std::to_string(n.left.index),
                        n.right.is_group ? "group" : "node", std::to_string(n.right.index)});
        w.ints("left_groups", n.left_groups);
        w.ints("right_groups", n.right_groups);
    }
}

TreatmentGrouping get_grouping(Reader& r) {
    TreatmentGrouping g;
    g.treatments = get_treatments(r);
    g.c1 = static_cast<int>(r.integer("c1"));
    g.c2 = static_cast<int>(r.integer("c2"));
    g.null_group = r.indices("null_group");
    const auto n_groups = r.integer("groups");
    for (long long k = 0; k < n_groups; ++k) g.groups.push_back(r.indices("group"));
    const auto n_nodes = r.integer("nodes");
    for (long long k = 0; k < n_nodes; ++k) {
        const auto f = r.fields("node");
        if (f.size() != 5) throw ValidationError("malformed node record");
        DecisionNode n;
        n.merge = std::stoll(f[0]);
        n.left = {f[1] == "group", std::stoi(f[2])};
        n.right = {f[3] == "group", std::stoi(f[4])};
        n.left_groups = r.ints("left_groups");
        n.right_groups = r.ints("right_groups");
        g.internal_nodes.push_back(std::move(n));
    }
    return g;
}

// --- ITRs ------------------------------------------------------------------

const char* kTreeTag = "# pdxitr-tree-itr v1";
const char* kFlatTag = "# pdxitr-flat-itr v1";
const char* kSlTag = "# pdxitr-superlearner v1";
const char* kFittedTag = "# pdxitr-fitted-method v1";

std::string variant_name(ItrVariant v) {
    switch (v) {
        case ItrVariant::QL1: return "ql1";
        case ItrVariant::QL2: return "ql2";
        case ItrVariant::OWL: return "owl";
    }
    return "ql1";
}

ItrVariant parse_variant(const std::string& s) {
    if (s == "ql1") return ItrVariant::QL1;
    if (s == "ql2") return ItrVariant::QL2;
    if (s == "owl") return ItrVariant::OWL;
    throw ValidationError("unknown ITR variant '" + s + "'");
}

}  // namespace

void write_tree_itr(std::ostream& os, const TreeItr& itr) {
    Writer w(os);
    w.line(kTreeTag);
    w.line("variant", {variant_name(itr.variant)});
    w.line("propagation", {itr.propagation == Propagation::SelectedGroup ? "selected" : "max_downstream"});
    w.line("learner", {itr.learner.kind == RegressorKind::Lasso ? "lasso" : "forest", fmt(itr.learner.lambda_ratio)});
    put_forest_params(w, itr.learner.forest);
    w.line("kernel", {itr.kernel == KernelKind::Linear ? "linear" : "gaussian"});
    w.num("lambda", itr.lambda);
    w.integer("feature_width", itr.feature_width);
    w.strings("feature_names", itr.feature_names);
    put_grouping(w, itr.grouping);
    for (std::size_t u = 0; u < itr.rules.size(); ++u) {
        const auto& rule = itr.rules[u];
        if (rule.kind == NodeRule::Kind::RegressionPair) {
            w.line("rule", {std::to_string(u), "regression"});
            put_regressor(w, rule.left);
            put_regressor(w, rule.right);
        } else {
            w.line("rule", {std::to_string(u), "decision"});
            put_decision(w, rule.decision);
        }
    }
    w.line("step0");
    put_regressor(w, itr.step0);
    w.line("end");
}

TreeItr read_tree_itr(std::istream& is) {
    Reader r(is);
    r.header(kTreeTag);
    TreeItr itr;
    itr.variant = parse_variant(r.word("variant"));
    itr.propagation = r.word("propagation") == "selected" ? Propagation::SelectedGroup : Propagation::MaxDownstream;
    const auto learner = r.fields("learner");
    if (learner.size() != 2) throw ValidationError("malformed learner record");
    itr.learner.kind = learner[0] == "lasso" ? RegressorKind::Lasso : RegressorKind::Forest;
    itr.learner.lambda_ratio = std::stod(learner[1]);
    itr.learner.forest = get_forest_params(r);
    itr.kernel = r.word("kernel") == "linear" ? KernelKind::Linear : KernelKind::Gaussian;
    itr.lambda = r.num("lambda");
    itr.feature_width = r.integer("feature_width");
    itr.feature_names = r.strings("feature_names");
    itr.grouping = get_grouping(r);
    for (std::size_t u = 0; u < itr.grouping.internal_nodes.size(); ++u) {
        const auto f = r.fields("rule");
        if (f.size() != 2 || std::stoul(f[0]) != u) throw ValidationError("rules out of order");
        NodeRule rule;
        if (f[1] == "regression") {
            rule.kind = NodeRule::Kind::RegressionPair;
            rule.left = get_regressor(r);
            rule.right = get_regressor(r);
        } else {
            rule.kind = NodeRule::Kind::Decision;
            rule.decision = get_decision(r);
        }
        itr.rules.push_back(std::move(rule));
    }
    r.fields("step0");
    itr.step0 = get_regressor(r);
    r.fields("end");
    return itr;
}

void write_flat_itr(std::ostream& os, const FlatItr& itr) {
    Writer w(os);
    w.line(kFlatTag);
    w.integer("feature_width", itr.feature_width);
    w.indices("candidates", itr.treatments);
    put_treatments(w, itr.labels);
    put_regressor(w, itr.model);
    w.line("end");
}

FlatItr read_flat_itr(std::istream& is) {
    Reader r(is);
    r.header(kFlatTag);
    FlatItr itr;
    itr.feature_width = r.integer("feature_width");
    itr.treatments = r.indices("candidates");
    itr.labels = get_treatments(r);
    itr.model = get_regressor(r);
    itr.kind = itr.model.kind;
    r.fields("end");
    return itr;
}

void write_superlearner(std::ostream& os, const SuperLearner& sl) {
    Writer w(os);
    w.line(kSlTag);
    w.vec("weights", sl.weights);
    w.ints("views", sl.views);
    w.num("cv_objective", sl.cv_objective);
    w.vec("vertex_objectives", sl.vertex_objectives);
    w.line("sa", {std::to_string(sl.sa.chains), std::to_string(sl.sa.iterations), fmt(sl.sa.cooling),
                  fmt(sl.sa.initial_temperature), fmt(sl.sa.step), std::to_string(sl.sa.seed)});
    w.integer("members", static_cast<long long>(sl.sub_itrs.size()));
    for (const auto& itr : sl.sub_itrs) write_tree_itr(os, itr);
    w.line("end");
}

SuperLearner read_superlearner(std::istream& is) {
    Reader r(is);
    r.header(kSlTag);
    SuperLearner sl;
    sl.weights = r.vec("weights");
    sl.views = r.ints("views");
    sl.cv_objective = r.num("cv_objective");
    sl.vertex_objectives = r.vec("vertex_objectives");
    const auto sa = r.fields("sa");
    if (sa.size() != 6) throw ValidationError("malformed annealing record");
    sl.sa.chains = std::stoi(sa[0]);
    sl.sa.iterations = std::stoi(sa[1]);
    sl.sa.cooling = std::stod(sa[2]);
    sl.sa.initial_temperature = std::stod(sa[3]);
    sl.sa.step = std::stod(sa[4]);
    sl.sa.seed = std::stoull(sa[5]);
    const auto n = r.integer("members");
    for (long long k = 0; k < n; ++k) sl.sub_itrs.push_back(read_tree_itr(is));
    r.fields("end");
    check_common_grouping(sl.sub_itrs);
    return sl;
}

void write_fitted_method(std::ostream& os, const FittedMethod& f) {
    Writer w(os);
    w.line(kFittedTag);
    w.line("method", {f.spec.name});
    w.line("params", {std::to_string(f.params.c1), std::to_string(f.params.c2), fmt(f.params.lambda)});
    w.strings("feature_names", f.feature_names);
    put_treatments(w, f.centering.treatments);
    w.indices("null_group", f.centering.null_group);
    w.vec("scale", f.centering.scale);
    w.integer("c1", f.centering.c1);
    if (f.dendrogram) {
        const auto& d = *f.dendrogram;
        w.indices("dendrogram_leaves", d.leaf_treatments);
        w.strings("dendrogram_labels", d.labels);
        w.integer("merges", static_cast<long long>(d.merges.size()));
        for (const auto& mg : d.merges)
            w.line("merge", {std::to_string(mg.left), std::to_string(mg.right), fmt(mg.height), std::to_string(mg.size)});
    } else {
        w.line("no_dendrogram");
    }
    if (f.encoder) {
        w.line("encoder");
        write_encoder(os, *f.encoder);
    } else {
        w.line("no_encoder");
    }
    if (f.tree) {
        w.line("model", {"tree"});
        write_tree_itr(os, *f.tree);
    } else if (f.flat) {
        w.line("model", {"flat"});
        write_flat_itr(os, *f.flat);
    } else if (f.superlearner) {
        w.line("model", {"superlearner"});
        write_superlearner(os, *f.superlearner);
    } else {
        throw ValidationError("fitted method holds no model");
    }
    w.line("end");
}

FittedMethod read_fitted_method(std::istream& is) {
    Reader r(is);
    r.header(kFittedTag);
    FittedMethod f;
    f.spec = method_from_name(r.word("method"));
    const auto p = r.fields("params");
    if (p.size() != 3) throw ValidationError("malformed params record");
    f.params = {std::stoi(p[0]), std::stoi(p[1]), std::stod(p[2])};
    f.feature_names = r.strings("feature_names");
    f.centering.treatments = get_treatments(r);
    f.centering.null_group = r.indices("null_group");
    f.centering.scale = r.vec("scale");
    f.centering.c1 = static_cast<int>(r.integer("c1"));

    std::string line;
    auto peek_key = [&]() {
        const auto pos = is.tellg();
        std::getline(is, line);
        is.seekg(pos);
        return line.substr(0, line.find('\t'));
    };
    if (peek_key() == "no_dendrogram") {
        r.fields("no_dendrogram");
    } else {
        Dendrogram d;
        d.leaf_treatments = r.indices("dendrogram_leaves");
        d.labels = r.strings("dendrogram_labels");
        const auto n = r.integer("merges");
        for (long long k = 0; k < n; ++k) {
            const auto m = r.fields("merge");
            if (m.size() != 4) throw ValidationError("malformed merge record");
            d.merges.push_back({std::stoll(m[0]), std::stoll(m[1]), std::stod(m[2]), std::stoll(m[3])});
        }
        f.dendrogram = std::move(d);
    }
    if (peek_key() == "encoder") {
        r.fields("encoder");
        f.encoder = read_encoder(is);
    } else {
        r.fields("no_encoder");
    }
    const auto kind = r.word("model");
    if (kind == "tree") {
        f.tree = read_tree_itr(is);
        f.grouping = f.tree->grouping;
    } else if (kind == "flat") {
        f.flat = read_flat_itr(is);
    } else if (kind == "superlearner") {
        f.superlearner = read_superlearner(is);
        f.grouping = f.superlearner->grouping();
    } else {
        throw ValidationError("unknown model kind '" + kind + "'");
    }
    r.fields("end");
    return f;
}

}  // namespace pdxitr
