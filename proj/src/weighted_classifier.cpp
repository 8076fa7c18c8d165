#include "pdxitr/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pdxitr {

double DecisionFunction::value(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    if (x.size() != center.size()) throw ValidationError("decision function: feature width mismatch");
    Eigen::RowVectorXd z = x - center;
    for (Index k = 0; k < z.size(); ++k) z(k) = scale(k) > 0.0 ? z(k) / scale(k) : 0.0;
    if (kind == KernelKind::Linear) return z.dot(weights) + bias;
    double f = bias;
    const double denom = 2.0 * bandwidth * bandwidth;
    for (Index i = 0; i < support.rows(); ++i) f += coef(i) * std::exp(-(support.row(i) - z).squaredNorm() / denom);
    return f;
}

Eigen::VectorXd DecisionFunction::values(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd out(X.rows());
    for (Index i = 0; i < X.rows(); ++i) out(i) = value(X.row(i));
    return out;
}

int DecisionFunction::sign(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return value(x) >= 0.0 ? 1 : -1;
}

double median_pairwise_distance(const Eigen::MatrixXd& X) {
    std::vector<double> d;
    for (Index i = 0; i < X.rows(); ++i)
        for (Index j = i + 1; j < X.rows(); ++j) d.push_back((X.row(i) - X.row(j)).norm());
    if (d.empty()) return 1.0;
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    double med = *mid;
    if (d.size() % 2 == 0) {
        double lower = *std::max_element(d.begin(), mid);
        med = 0.5 * (med + lower);
    }
    return med > 0.0 ? med : 1.0;
}

namespace {

void check_classifier_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXi& labels, const Eigen::VectorXd& rewards) {
    if (X.rows() != labels.size() || X.rows() != rewards.size())
        throw ValidationError("weighted classifier: inconsistent input lengths");
    if (X.rows() < 1) throw ValidationError("weighted classifier: no observations");
    for (Index i = 0; i < labels.size(); ++i)
        if (labels(i) != 1 && labels(i) != -1) throw ValidationError("weighted classifier: labels must be +1 or -1");
    if (!X.allFinite() || !rewards.allFinite()) throw ValidationError("weighted classifier: non-finite inputs");
}

// Minimizes sum_i c_i (1 - y_i (f_i + b))_+ over b. Returns the midpoint of the
// optimal interval, or its finite end when the interval is unbounded.
double optimal_bias(const Eigen::VectorXd& f, const Eigen::VectorXd& y, const Eigen::VectorXd& c) {
    struct Break {
        double at;
        double weight;
    };
    std::vector<Break> breaks;
    double slope = 0.0;
    double total = 0.0;
    for (Index i = 0; i < f.size(); ++i) {
        if (c(i) <= 0.0) continue;
        breaks.push_back({y(i) - f(i), c(i)});
        if (y(i) > 0) slope -= c(i);
        total += c(i);
    }
    if (breaks.empty()) return 0.0;
    std::sort(breaks.begin(), breaks.end(), [](const Break& a, const Break& b) { return a.at < b.at; });
    const double eps = 1e-12 * total;
    // Slope rises by c_i at every breakpoint, from -sum(c_+) to +sum(c_-).
    if (slope >= -eps) return breaks.front().at;
    for (std::size_t k = 0; k < breaks.size(); ++k) {
        slope += breaks[k].weight;
        if (slope > eps) return breaks[k].at;
        if (slope >= -eps) {
            std::size_t end = k + 1;
            while (end < breaks.size() && breaks[end].at == breaks[k].at) ++end;
            if (end >= breaks.size()) return breaks[k].at;
            // Skip breakpoints that coincide with this one before checking for a flat stretch.
            double s = slope;
            for (std::size_t q = k + 1; q < end; ++q) s += breaks[q].weight;
            if (s > eps) return breaks[k].at;
            return 0.5 * (breaks[k].at + breaks[end].at);
        }
    }
    return breaks.back().at;
}

double hinge_sum(const Eigen::VectorXd& f, double b, const Eigen::VectorXd& y, const Eigen::VectorXd& c) {
    double s = 0.0;
    for (Index i = 0; i < f.size(); ++i) s += c(i) * std::max(0.0, 1.0 - y(i) * (f(i) + b));
    return s;
}

}  // namespace

ClassifierFit fit_weighted_classifier_traced(const Eigen::MatrixXd& X, const Eigen::VectorXi& labels,
                                             const Eigen::VectorXd& rewards, KernelKind kind, double lambda,
                                             const ClassifierOptions& options) {
    check_classifier_inputs(X, labels, rewards);
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("weighted classifier: lambda must be > 0");
    if ((rewards.array() == 0.0).all()) throw NumericalError("degenerate weights: all rewards are zero");

    const Index n = X.rows();
    const double nd = static_cast<double>(n);

    DecisionFunction fn;
    fn.kind = kind;
    fn.lambda = lambda;
    fn.center = X.colwise().mean();
    Eigen::MatrixXd Z = X.rowwise() - fn.center;
    fn.scale = (Z.colwise().squaredNorm() / nd).cwiseSqrt();
    for (Index k = 0; k < X.cols(); ++k) {
        if (fn.scale(k) > 1e-12 * std::max(1.0, std::abs(fn.center(k)))) {
            Z.col(k) /= fn.scale(k);
        } else {
            fn.scale(k) = 0.0;
            Z.col(k).setZero();
        }
    }

    Eigen::MatrixXd K;
    if (kind == KernelKind::Linear) {
        K = Z * Z.transpose();
    } else {
        fn.bandwidth = options.bandwidth.value_or(median_pairwise_distance(Z));
        if (!(fn.bandwidth > 0.0)) throw ValidationError("weighted classifier: bandwidth must be positive");
        const double denom = 2.0 * fn.bandwidth * fn.bandwidth;
        K.resize(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = i; j < n; ++j) K(i, j) = K(j, i) = std::exp(-(Z.row(i) - Z.row(j)).squaredNorm() / denom);
    }

    // Flip the target where the reward is negative; weight by |R| / n.
    Eigen::VectorXd y(n), c(n), C(n);
    for (Index i = 0; i < n; ++i) {
        y(i) = rewards(i) >= 0.0 ? labels(i) : -labels(i);
        c(i) = std::abs(rewards(i)) / nd;
        C(i) = c(i) / (2.0 * lambda);
    }

    // Dual: max sum(alpha) - 0.5 alpha'Q alpha, 0 <= alpha <= C, y'alpha = 0,
    // with Q_ij = y_i y_j K_ij. G = Q alpha - 1.
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd G = Eigen::VectorXd::Constant(n, -1.0);
    const double tau = 1e-12;
    auto Q = [&](Index i, Index j) { return y(i) * y(j) * K(i, j); };

    ClassifierFit fit;
    double best_obj = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_alpha = alpha;
    double best_b = 0.0;

    auto evaluate = [&]() {
        // f_i without bias, recovered from the gradient: (Q alpha)_i = y_i f_i.
        Eigen::VectorXd f(n);
        for (Index i = 0; i < n; ++i) f(i) = y(i) * (G(i) + 1.0);
        const double norm_sq = std::max(0.0, alpha.dot(G + Eigen::VectorXd::Ones(n)));
        const double b = optimal_bias(f, y, c);
        const double primal = hinge_sum(f, b, y, c) + lambda * norm_sq;
        const double dual = 2.0 * lambda * (alpha.sum() - 0.5 * norm_sq);
        if (primal < best_obj) {
            best_obj = primal;
            best_alpha = alpha;
            best_b = b;
        }
        fit.objective_trace.push_back(best_obj);
        fit.duality_gap = best_obj - dual;
        return fit.duality_gap <= options.tolerance * std::max(std::abs(best_obj), 1e-300);
    };

    auto upper = [&](Index t) { return alpha(t) >= C(t); };
    auto lower = [&](Index t) { return alpha(t) <= 0.0; };

    bool converged = evaluate();
    int iter = 0;
    while (!converged && iter < options.max_iterations) {
        // Working-set selection with second-order information.
        double g_max = -std::numeric_limits<double>::infinity();
        Index i = -1;
        for (Index t = 0; t < n; ++t) {
            if (y(t) > 0) {
                if (!upper(t) && -G(t) >= g_max) { g_max = -G(t); i = t; }
            } else {
                if (!lower(t) && G(t) >= g_max) { g_max = G(t); i = t; }
            }
        }
        double g_max2 = -std::numeric_limits<double>::infinity();
        Index j = -1;
        double obj_diff_min = std::numeric_limits<double>::infinity();
        if (i >= 0) {
            for (Index t = 0; t < n; ++t) {
                if (y(t) > 0) {
                    if (lower(t)) continue;
                    const double grad_diff = g_max + G(t);
                    g_max2 = std::max(g_max2, G(t));
                    if (grad_diff > 0) {
                        double quad = K(i, i) + K(t, t) - 2.0 * y(i) * Q(i, t);
                        const double od = -(grad_diff * grad_diff) / (quad > 0 ? quad : tau);
                        if (od <= obj_diff_min) { j = t; obj_diff_min = od; }
                    }
                } else {
                    if (upper(t)) continue;
                    const double grad_diff = g_max - G(t);
                    g_max2 = std::max(g_max2, -G(t));
                    if (grad_diff > 0) {
                        double quad = K(i, i) + K(t, t) + 2.0 * y(i) * Q(i, t);
                        const double od = -(grad_diff * grad_diff) / (quad > 0 ? quad : tau);
                        if (od <= obj_diff_min) { j = t; obj_diff_min = od; }
                    }
                }
            }
        }
        if (i < 0 || j < 0 || g_max + g_max2 < 1e-13) break;

        const double old_i = alpha(i), old_j = alpha(j);
        const double Ci = C(i), Cj = C(j);
        if (y(i) != y(j)) {
            double quad = K(i, i) + K(j, j) + 2.0 * Q(i, j);
            if (quad <= 0) quad = tau;
            const double delta = (-G(i) - G(j)) / quad;
            const double diff = alpha(i) - alpha(j);
            alpha(i) += delta;
            alpha(j) += delta;
            if (diff > 0) {
                if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = diff; }
            } else {
                if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = -diff; }
            }
            if (diff > Ci - Cj) {
                if (alpha(i) > Ci) { alpha(i) = Ci; alpha(j) = Ci - diff; }
            } else {
                if (alpha(j) > Cj) { alpha(j) = Cj; alpha(i) = Cj + diff; }
            }
        } else {
            double quad = K(i, i) + K(j, j) - 2.0 * Q(i, j);
            if (quad <= 0) quad = tau;
            const double delta = (G(i) - G(j)) / quad;
            const double sum = alpha(i) + alpha(j);
            alpha(i) -= delta;
            alpha(j) += delta;
            if (sum > Ci) {
                if (alpha(i) > Ci) { alpha(i) = Ci; alpha(j) = sum - Ci; }
            } else {
                if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = sum; }
            }
            if (sum > Cj) {
                if (alpha(j) > Cj) { alpha(j) = Cj; alpha(i) = sum - Cj; }
            } else {
                if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = sum; }
            }
        }
        const double di = alpha(i) - old_i, dj = alpha(j) - old_j;
        for (Index t = 0; t < n; ++t) G(t) += Q(i, t) * di + Q(j, t) * dj;
        ++iter;
        converged = evaluate();
    }
    fit.iterations = iter;

    Eigen::VectorXd coef = best_alpha.cwiseProduct(y);
    fn.bias = best_b;
    fn.penalty = std::max(0.0, coef.dot(K * coef));
    if (kind == KernelKind::Linear) {
        fn.weights = Z.transpose() * coef;
    } else {
        std::vector<Index> sv;
        for (Index t = 0; t < n; ++t)
            if (best_alpha(t) > 0.0) sv.push_back(t);
        fn.support.resize(static_cast<Index>(sv.size()), Z.cols());
        fn.coef.resize(static_cast<Index>(sv.size()));
        for (std::size_t k = 0; k < sv.size(); ++k) {
            fn.support.row(static_cast<Index>(k)) = Z.row(sv[k]);
            fn.coef(static_cast<Index>(k)) = coef(sv[k]);
        }
    }
    fit.function = std::move(fn);
    return fit;
}

DecisionFunction fit_weighted_classifier(const Eigen::MatrixXd& X, const Eigen::VectorXi& labels,
                                         const Eigen::VectorXd& rewards, KernelKind kind, double lambda,
                                         const ClassifierOptions& options) {
    return fit_weighted_classifier_traced(X, labels, rewards, kind, lambda, options).function;
}

double weighted_hinge_objective(const DecisionFunction& f, const Eigen::MatrixXd& X, const Eigen::VectorXi& labels,
                                const Eigen::VectorXd& rewards) {
    check_classifier_inputs(X, labels, rewards);
    const double nd = static_cast<double>(X.rows());
    double loss = 0.0;
    for (Index i = 0; i < X.rows(); ++i) {
        const double af = labels(i) * f.value(X.row(i));
        const double r = rewards(i);
        loss += std::abs(r) * (r >= 0.0 ? std::max(0.0, 1.0 - af) : std::max(0.0, 1.0 + af));
    }
    return loss / nd + f.lambda * f.penalty;
}

}  // namespace pdxitr
