#pragma once

// Independent oracles and small generators shared by the unit tests and the
// acceptance binary. Nothing here calls the library routine it is meant to check.

#include "pdxitr/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using pdxitr::Index;

struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

    Eigen::MatrixXd matrix(Index rows, Index cols, double sd = 1.0) {
        Eigen::MatrixXd m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = normal(sd);
        return m;
    }
};

// Distance covariance straight from the definition with explicit loops.
inline double brute_dcov(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    const Index n = x.rows();
    auto dist = [](const Eigen::MatrixXd& m, Index i, Index j) {
        double s = 0.0;
        for (Index k = 0; k < m.cols(); ++k) s += (m(i, k) - m(j, k)) * (m(i, k) - m(j, k));
        return std::sqrt(s);
    };
    std::vector<std::vector<double>> a(n, std::vector<double>(n)), b = a;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            a[i][j] = dist(x, i, j);
            b[i][j] = dist(y, i, j);
        }
    auto centered = [n](const std::vector<std::vector<double>>& d) {
        std::vector<double> row(n, 0.0), col(n, 0.0);
        double all = 0.0;
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) {
                row[i] += d[i][j] / n;
                col[j] += d[i][j] / n;
                all += d[i][j] / (n * n);
            }
        auto out = d;
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) out[i][j] = d[i][j] - row[i] - col[j] + all;
        return out;
    };
    const auto A = centered(a), B = centered(b);
    double s = 0.0;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) s += A[i][j] * B[i][j];
    s /= static_cast<double>(n * n);
    return s > 0.0 ? std::sqrt(s) : 0.0;
}

// Mean over rows of the best group-averaged mean.
inline double brute_value(const Eigen::MatrixXd& means, const std::vector<std::vector<Index>>& groups) {
    double total = 0.0;
    for (Index r = 0; r < means.rows(); ++r) {
        double best = -INFINITY;
        for (const auto& g : groups) {
            double s = 0.0;
            for (Index t : g) s += means(r, t);
            best = std::max(best, s / static_cast<double>(g.size()));
        }
        total += best;
    }
    return total / static_cast<double>(means.rows());
}

// Central-difference gradient.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& theta, double h = 1e-6) {
    Eigen::VectorXd g(theta.size());
    Eigen::VectorXd t = theta;
    for (Index k = 0; k < theta.size(); ++k) {
        t(k) = theta(k) + h;
        const double up = f(t);
        t(k) = theta(k) - h;
        const double down = f(t);
        t(k) = theta(k);
        g(k) = (up - down) / (2.0 * h);
    }
    return g;
}

// n x p design whose columns have mean 0 and population variance 1 and are
// mutually orthogonal, so Z'Z / n = I.
inline Eigen::MatrixXd orthonormal_design(Gen& g, Index n, Index p) {
    Eigen::MatrixXd A(n, p + 1);
    A.col(0).setOnes();
    A.rightCols(p) = g.matrix(n, p);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p + 1);
    return Q.rightCols(p) * std::sqrt(static_cast<double>(n));
}

inline double soft(double z, double l) { return z > l ? z - l : (z < -l ? z + l : 0.0); }

// Dataset from a treatments x lines response table (NaN = not applied).
// Treatment 0 is the untreated arm.
inline pdxitr::PdxDataset make_dataset(const Eigen::MatrixXd& responses, const Eigen::MatrixXd& features) {
    pdxitr::PdxDataset d;
    const Index P = responses.rows(), m = responses.cols();
    for (Index j = 0; j < m; ++j) d.features.line_ids.push_back("L" + std::to_string(j + 1));
    for (Index k = 0; k < features.cols(); ++k) d.features.feature_names.push_back("G" + std::to_string(k + 1) + ".rna");
    d.features.values = features;
    d.treatments.push_back({"untreated", true});
    for (Index t = 1; t < P; ++t) d.treatments.push_back({"T" + std::to_string(t), false});
    for (Index j = 0; j < m; ++j)
        for (Index t = 0; t < P; ++t)
            if (pdxitr::is_present(responses(t, j)))
                d.records.push_back({d.features.line_ids[j], d.treatments[t], responses(t, j), std::nullopt});
    return d;
}

}  // namespace oracle
