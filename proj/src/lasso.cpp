#include "pdxitr/learners.hpp"

#include <algorithm>
#include <cmath>

namespace pdxitr {

namespace {

struct Standardized {
    Eigen::MatrixXd Z;
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd sd;  // 0 for constant columns
};

Standardized standardize_columns(const Eigen::MatrixXd& X) {
    Standardized s;
    const double n = static_cast<double>(X.rows());
    s.mean = X.colwise().mean();
    s.Z = X.rowwise() - s.mean;
    s.sd = (s.Z.colwise().squaredNorm() / n).cwiseSqrt();
    for (Index k = 0; k < X.cols(); ++k) {
        if (s.sd(k) > 1e-12 * std::max(1.0, std::abs(s.mean(k)))) {
            s.Z.col(k) /= s.sd(k);
        } else {
            s.sd(k) = 0.0;
            s.Z.col(k).setZero();
        }
    }
    return s;
}

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

void check_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() != y.size()) throw ValidationError("lasso: X rows and y length differ");
    if (X.rows() < 2) throw ValidationError("lasso: at least two observations required");
    if (!X.allFinite() || !y.allFinite()) throw ValidationError("lasso: non-finite inputs");
}

}  // namespace

Eigen::VectorXd LinearModel::predict(const Eigen::MatrixXd& X) const {
    if (X.cols() != coefficients.size())
        throw ValidationError("linear model expects " + std::to_string(coefficients.size()) + " features, got " +
                              std::to_string(X.cols()));
    return (X * coefficients).array() + intercept;
}

double LinearModel::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    if (x.size() != coefficients.size()) throw ValidationError("linear model: feature width mismatch");
    return intercept + x.dot(coefficients);
}

double lasso_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    check_inputs(X, y);
    auto s = standardize_columns(X);
    Eigen::VectorXd yc = y.array() - y.mean();
    if (X.cols() == 0) return 0.0;
    return (s.Z.transpose() * yc).cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
}

LassoFit fit_lasso_traced(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                          const LassoOptions& options) {
    check_inputs(X, y);
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lasso: lambda must be >= 0");
    const Index n = X.rows();
    const Index p = X.cols();
    const double nd = static_cast<double>(n);
    auto s = standardize_columns(X);
    const double ybar = y.mean();
    Eigen::VectorXd r = y.array() - ybar;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);

    LassoFit fit;
    fit.lambda_max = p > 0 ? (s.Z.transpose() * r).cwiseAbs().maxCoeff() / nd : 0.0;

    auto objective = [&] { return r.squaredNorm() / (2.0 * nd) + lambda * beta.lpNorm<1>(); };
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Index j = 0; j < p; ++j) {
            if (s.sd(j) == 0.0) continue;
            const double old = beta(j);
            const double rho = s.Z.col(j).dot(r) / nd + old;
            const double updated = soft_threshold(rho, lambda);
            if (updated != old) {
                r.noalias() -= s.Z.col(j) * (updated - old);
                beta(j) = updated;
                max_change = std::max(max_change, std::abs(updated - old));
            }
        }
        const double obj = objective();
        fit.objective_per_sweep.push_back(obj);
        fit.sweeps = sweep + 1;
        if (max_change <= options.coefficient_tolerance) break;
    }

    LinearModel& model = fit.model;
    model.lambda = lambda;
    model.coefficients = Eigen::VectorXd::Zero(p);
    for (Index j = 0; j < p; ++j)
        if (s.sd(j) > 0.0) model.coefficients(j) = beta(j) / s.sd(j);
    model.intercept = ybar - s.mean.dot(model.coefficients);
    return fit;
}

LinearModel fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                      const LassoOptions& options) {
    return fit_lasso_traced(X, y, lambda, options).model;
}

double lasso_objective(const LinearModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    check_inputs(X, y);
    const double nd = static_cast<double>(X.rows());
    Eigen::VectorXd resid = y - model.predict(X);
    Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::RowVectorXd sd = ((X.rowwise() - mean).colwise().squaredNorm() / nd).cwiseSqrt();
    double penalty = 0.0;
    for (Index j = 0; j < X.cols(); ++j) penalty += std::abs(model.coefficients(j)) * sd(j);
    return resid.squaredNorm() / (2.0 * nd) + model.lambda * penalty;
}

}  // namespace pdxitr
