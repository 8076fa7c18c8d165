#include "pdxitr/autoencoder.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace pdxitr {

namespace {

constexpr const char* kEncoderTag = "# pdxitr-encoder v1";

bool is_tanh_layer(std::size_t layer) { return layer == 0 || layer == 2; }

struct Forward {
    std::vector<Eigen::MatrixXd> activations;  // activations[0] = input
};

Forward forward(const Encoder& enc, const Eigen::MatrixXd& Z, std::size_t layers) {
    Forward f;
    f.activations.push_back(Z);
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::MatrixXd a = f.activations.back() * enc.weights[l].transpose();
        a.rowwise() += enc.biases[l].transpose();
        if (is_tanh_layer(l)) a = a.array().tanh().matrix();
        f.activations.push_back(std::move(a));
    }
    return f;
}

Eigen::MatrixXd mask_inactive(const Encoder& enc, Eigen::MatrixXd M) {
    const auto act = enc.active();
    for (Index c = 0; c < M.cols(); ++c)
        if (!act(c)) M.col(c).setZero();
    return M;
}

double masked_mse(const Encoder& enc, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& out) {
    const Index p_active = enc.active().count();
    if (p_active == 0 || Z.rows() == 0) return 0.0;
    const Eigen::MatrixXd diff = mask_inactive(enc, out - Z);
    return diff.squaredNorm() / (static_cast<double>(Z.rows()) * static_cast<double>(p_active));
}

void check_width(const Encoder& enc, Index cols) {
    if (cols != enc.input_width())
        throw ValidationError("encoder expects " + std::to_string(enc.input_width()) + " features, got " +
                              std::to_string(cols));
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs <= 0) throw ValidationError("epochs must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (batch_size <= 0) throw ValidationError("batch size must be positive");
    if (bottleneck_grid.empty()) throw ValidationError("bottleneck grid is empty");
    for (int h : bottleneck_grid)
        if (h <= 0) throw ValidationError("bottleneck widths must be positive");
    if (cv_folds < 2) throw ValidationError("bottleneck cross-validation needs at least 2 folds");
    if (hidden_width < 0) throw ValidationError("hidden width must be >= 0");
}

Eigen::MatrixXd Encoder::standardize(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd Z = X.rowwise() - mean;
    for (Index c = 0; c < Z.cols(); ++c) {
        if (sd(c) > 0.0)
            Z.col(c) /= sd(c);
        else
            Z.col(c).setZero();
    }
    return Z;
}

Encoder init_encoder(const Eigen::MatrixXd& X, int bottleneck, int hidden_width, std::uint64_t seed) {
    const auto p = static_cast<int>(X.cols());
    if (bottleneck <= 0 || bottleneck >= p)
        throw ValidationError("bottleneck must be in [1, " + std::to_string(p - 1) + "], got " +
                              std::to_string(bottleneck));
    if (X.rows() < bottleneck + 1)
        throw ValidationError("autoencoder needs at least bottleneck + 1 rows");
    const int H = hidden_width > 0 ? hidden_width : 4 * bottleneck;

    Encoder enc;
    enc.widths = {p, H, bottleneck, H, p};
    enc.mean = X.colwise().mean();
    enc.sd = ((X.rowwise() - enc.mean).array().square().colwise().sum() / static_cast<double>(X.rows())).sqrt();
    for (Index c = 0; c < enc.sd.size(); ++c)
        if (enc.sd(c) < 1e-12 * std::max(1.0, std::abs(enc.mean(c)))) enc.sd(c) = 0.0;

    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < enc.widths.size(); ++l) {
        const int fan_in = enc.widths[l];
        const int fan_out = enc.widths[l + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        Eigen::MatrixXd W(fan_out, fan_in);
        for (Index i = 0; i < W.rows(); ++i)
            for (Index j = 0; j < W.cols(); ++j) W(i, j) = u(rng);
        enc.weights.push_back(std::move(W));
        enc.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return enc;
}

Eigen::VectorXd parameters(const Encoder& enc) {
    Index total = 0;
    for (std::size_t l = 0; l < enc.weights.size(); ++l) total += enc.weights[l].size() + enc.biases[l].size();
    Eigen::VectorXd theta(total);
    Index pos = 0;
    for (std::size_t l = 0; l < enc.weights.size(); ++l) {
        theta.segment(pos, enc.weights[l].size()) = enc.weights[l].reshaped();
        pos += enc.weights[l].size();
        theta.segment(pos, enc.biases[l].size()) = enc.biases[l];
        pos += enc.biases[l].size();
    }
    return theta;
}

void set_parameters(Encoder& enc, const Eigen::VectorXd& theta) {
    Index pos = 0;
    for (std::size_t l = 0; l < enc.weights.size(); ++l) {
        auto& W = enc.weights[l];
        W.reshaped() = theta.segment(pos, W.size());
        pos += W.size();
        enc.biases[l] = theta.segment(pos, enc.biases[l].size());
        pos += enc.biases[l].size();
    }
    if (pos != theta.size()) throw ValidationError("parameter vector length mismatch");
}

std::pair<double, Eigen::VectorXd> loss_and_gradient(const Encoder& enc, const Eigen::MatrixXd& Z) {
    const std::size_t L = enc.weights.size();
    const Forward f = forward(enc, Z, L);
    const Index p_active = enc.active().count();
    const double denom = static_cast<double>(Z.rows()) * static_cast<double>(std::max<Index>(p_active, 1));
    const Eigen::MatrixXd diff = mask_inactive(enc, f.activations.back() - Z);
    const double loss = p_active == 0 ? 0.0 : diff.squaredNorm() / denom;

    std::vector<Eigen::MatrixXd> dW(L);
    std::vector<Eigen::VectorXd> db(L);
    Eigen::MatrixXd delta = 2.0 * diff / denom;
    for (std::size_t l = L; l-- > 0;) {
        if (is_tanh_layer(l)) delta = (delta.array() * (1.0 - f.activations[l + 1].array().square())).matrix();
        dW[l] = delta.transpose() * f.activations[l];
        db[l] = delta.colwise().sum().transpose();
        if (l > 0) delta = delta * enc.weights[l];
    }

    Eigen::VectorXd grad(parameters(enc).size());
    Index pos = 0;
    for (std::size_t l = 0; l < L; ++l) {
        grad.segment(pos, dW[l].size()) = dW[l].reshaped();
        pos += dW[l].size();
        grad.segment(pos, db[l].size()) = db[l];
        pos += db[l].size();
    }
    return {loss, grad};
}

Encoder train_fixed(const Eigen::MatrixXd& X, int bottleneck, const TrainConfig& cfg) {
    cfg.validate();
    Encoder enc = init_encoder(X, bottleneck, cfg.hidden_width, cfg.seed);
    const Eigen::MatrixXd Z = enc.standardize(X);
    const Index n = Z.rows();

    Eigen::VectorXd theta = parameters(enc);
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;

    std::mt19937_64 rng(derive_seed(cfg.seed, 1));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const Index batch = n < 64 ? n : std::min<Index>(cfg.batch_size, n);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (batch < n) std::shuffle(order.begin(), order.end(), rng);
        for (Index start = 0; start < n; start += batch) {
            const Index len = std::min(batch, n - start);
            Eigen::MatrixXd Zb(len, Z.cols());
            for (Index r = 0; r < len; ++r) Zb.row(r) = Z.row(order[static_cast<std::size_t>(start + r)]);
            auto [loss, grad] = loss_and_gradient(enc, Zb);
            if (!std::isfinite(loss) || !grad.allFinite())
                throw NumericalError("autoencoder training diverged at epoch " + std::to_string(epoch));
            ++step;
            m1 = beta1 * m1 + (1.0 - beta1) * grad;
            m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseAbs2();
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            theta.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
            set_parameters(enc, theta);
        }
    }
    enc.training_mse = reconstruction_error(enc, X);
    if (!std::isfinite(enc.training_mse))
        throw NumericalError("autoencoder training diverged at epoch " + std::to_string(cfg.epochs));
    return enc;
}

Encoder train_autoencoder(const FeatureMatrix& X, const TrainConfig& cfg, std::vector<BottleneckScore>* cv_scores) {
    cfg.validate();
    const Index n = X.rows();
    std::vector<int> grid = cfg.bottleneck_grid;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    for (int h : grid)
        if (h >= X.cols())
            throw ValidationError("bottleneck " + std::to_string(h) + " must be below the feature count " +
                                  std::to_string(X.cols()));

    int chosen = grid.front();
    if (grid.size() > 1) {
        const Index k = std::min<Index>(cfg.cv_folds, n);
        std::vector<Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Index{0});
        std::mt19937_64 rng(derive_seed(cfg.seed, 2));
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<Index> fold_of(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < order.size(); ++i) fold_of[static_cast<std::size_t>(order[i])] = static_cast<Index>(i) % k;

        std::vector<double> errors(grid.size() * static_cast<std::size_t>(k));
        parallel_for(errors.size(), cfg.workers, [&](std::size_t task) {
            const std::size_t gi = task / static_cast<std::size_t>(k);
            const Index fold = static_cast<Index>(task % static_cast<std::size_t>(k));
            std::vector<Index> train, valid;
            for (Index r = 0; r < n; ++r) (fold_of[static_cast<std::size_t>(r)] == fold ? valid : train).push_back(r);
            TrainConfig sub = cfg;
            sub.seed = derive_seed(cfg.seed, 100 + task);
            const Encoder enc = train_fixed(X.values(train, Eigen::all), grid[gi], sub);
            errors[task] = reconstruction_error(enc, X.values(valid, Eigen::all));
        });

        double best = std::numeric_limits<double>::infinity();
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            double sum = 0.0;
            for (Index f = 0; f < k; ++f) sum += errors[gi * static_cast<std::size_t>(k) + static_cast<std::size_t>(f)];
            const double mean = sum / static_cast<double>(k);
            if (cv_scores) cv_scores->push_back({grid[gi], mean});
            if (mean < best) {
                best = mean;
                chosen = grid[gi];
            }
        }
    }

    Encoder enc = train_fixed(X.values, chosen, cfg);
    enc.feature_names = X.feature_names;
    return enc;
}

Eigen::MatrixXd encode(const Encoder& enc, const Eigen::MatrixXd& X) {
    check_width(enc, X.cols());
    return forward(enc, enc.standardize(X), 2).activations.back();
}

Eigen::MatrixXd decode(const Encoder& enc, const Eigen::MatrixXd& latent) {
    if (latent.cols() != enc.bottleneck()) throw ValidationError("latent width does not match the bottleneck");
    Eigen::MatrixXd a = latent;
    for (std::size_t l = 2; l < enc.weights.size(); ++l) {
        a = a * enc.weights[l].transpose();
        a.rowwise() += enc.biases[l].transpose();
        if (is_tanh_layer(l)) a = a.array().tanh().matrix();
    }
    return mask_inactive(enc, std::move(a));
}

double reconstruction_error(const Encoder& enc, const Eigen::MatrixXd& X) {
    check_width(enc, X.cols());
    const Eigen::MatrixXd Z = enc.standardize(X);
    return masked_mse(enc, Z, forward(enc, Z, enc.weights.size()).activations.back());
}

double pca_error(const Eigen::MatrixXd& X, int h) {
    const Index p = X.cols();
    if (h < 0 || h >= p) throw ValidationError("PCA rank must be below the feature count " + std::to_string(p));
    const Index n = X.rows();
    if (n == 0) throw ValidationError("PCA needs at least one row");
    const Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::MatrixXd Z = X.rowwise() - mean;
    Index p_active = 0;
    for (Index c = 0; c < p; ++c) {
        const double sd = std::sqrt(Z.col(c).squaredNorm() / static_cast<double>(n));
        if (sd < 1e-12 * std::max(1.0, std::abs(mean(c)))) {
            Z.col(c).setZero();
        } else {
            Z.col(c) /= sd;
            ++p_active;
        }
    }
    if (p_active == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Z.transpose() * Z, Eigen::EigenvaluesOnly);
    double trailing = 0.0;
    for (Index i = 0; i < p - h; ++i) trailing += std::max(0.0, eig.eigenvalues()(i));
    return trailing / (static_cast<double>(n) * static_cast<double>(p_active));
}

FeatureMatrix encode_features(const Encoder& enc, const FeatureMatrix& X) {
    FeatureMatrix out;
    out.line_ids = X.line_ids;
    out.values = encode(enc, X.values);
    for (Index k = 0; k < out.values.cols(); ++k) out.feature_names.push_back("ae" + std::to_string(k + 1));
    return out;
}

void write_encoder(std::ostream& os, const Encoder& enc) {
    os << kEncoderTag << '\n' << std::setprecision(17);
    os << "widths";
    for (int w : enc.widths) os << '\t' << w;
    os << "\nfeatures";
    for (const auto& f : enc.feature_names) os << '\t' << f;
    os << "\nmean";
    for (Index c = 0; c < enc.mean.size(); ++c) os << '\t' << enc.mean(c);
    os << "\nsd";
    for (Index c = 0; c < enc.sd.size(); ++c) os << '\t' << enc.sd(c);
    os << "\ntraining_mse\t" << enc.training_mse << '\n';
    const Eigen::VectorXd theta = parameters(enc);
    os << "parameters\t" << theta.size();
    for (Index i = 0; i < theta.size(); ++i) os << '\t' << theta(i);
    os << '\n';
}

Encoder read_encoder(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kEncoderTag) throw ValidationError("not a pdxitr encoder file");
    auto fields = [&](const std::string& key) {
        if (!std::getline(is, line)) throw ValidationError("encoder file truncated before '" + key + "'");
        std::vector<std::string> parts;
        std::stringstream ss(line);
        std::string part;
        while (std::getline(ss, part, '\t')) parts.push_back(part);
        if (parts.empty() || parts[0] != key) throw ValidationError("encoder file: expected '" + key + "'");
        parts.erase(parts.begin());
        return parts;
    };
    auto to_vec = [](const std::vector<std::string>& parts) {
        Eigen::RowVectorXd v(static_cast<Index>(parts.size()));
        for (std::size_t i = 0; i < parts.size(); ++i) v(static_cast<Index>(i)) = std::stod(parts[i]);
        return v;
    };

    Encoder enc;
    for (const auto& w : fields("widths")) enc.widths.push_back(std::stoi(w));
    if (enc.widths.size() != 5) throw ValidationError("encoder file: expected 5 layer widths");
    enc.feature_names = fields("features");
    enc.mean = to_vec(fields("mean"));
    enc.sd = to_vec(fields("sd"));
    enc.training_mse = std::stod(fields("training_mse").at(0));
    auto params = fields("parameters");
    if (params.empty()) throw ValidationError("encoder file: missing parameters");
    params.erase(params.begin());
    for (std::size_t l = 0; l + 1 < enc.widths.size(); ++l) {
        enc.weights.emplace_back(enc.widths[l + 1], enc.widths[l]);
        enc.biases.emplace_back(enc.widths[l + 1]);
    }
    const Eigen::RowVectorXd theta = to_vec(params);
    if (theta.size() != parameters(enc).size()) throw ValidationError("encoder file: parameter count mismatch");
    set_parameters(enc, theta.transpose());
    return enc;
}

}  // namespace pdxitr
