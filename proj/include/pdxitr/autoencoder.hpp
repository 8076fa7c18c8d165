#pragma once

#include "pdxitr/core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

namespace pdxitr {

struct TrainConfig {
    int epochs = 2000;
    double learning_rate = 0.01;
    /// Mini-batch size used when the sample has at least 64 rows.
    int batch_size = 32;
    std::uint64_t seed = 0;
    std::vector<int> bottleneck_grid{2};
    int cv_folds = 5;
    /// Width of the two tanh layers; 0 means 4 * bottleneck.
    int hidden_width = 0;
    int workers = 1;

    void validate() const;
};

/// Fully connected autoencoder p -> H -> h -> H -> p with tanh on the H
/// layers and a linear bottleneck and output. Inputs are standardized with
/// the stored mean and population sd; zero-sd features are held at zero and
/// excluded from the loss.
struct Encoder {
    std::vector<int> widths;  // p, H, h, H, p
    std::vector<Eigen::MatrixXd> weights;  // weights[l] is widths[l+1] x widths[l]
    std::vector<Eigen::VectorXd> biases;
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd sd;
    std::vector<std::string> feature_names;
    /// Mean squared reconstruction error on the training rows.
    double training_mse = 0.0;

    Index input_width() const { return widths.empty() ? 0 : widths.front(); }
    Index bottleneck() const { return widths.size() < 3 ? 0 : widths[2]; }
    /// Columns with non-zero training sd.
    Eigen::Array<bool, 1, Eigen::Dynamic> active() const { return sd.array() > 0.0; }

    Eigen::MatrixXd standardize(const Eigen::MatrixXd& X) const;
};

/// Randomly initialized network (Xavier uniform) with standardization fitted on X.
Encoder init_encoder(const Eigen::MatrixXd& X, int bottleneck, int hidden_width, std::uint64_t seed);

/// Flattened weights and biases in layer order.
Eigen::VectorXd parameters(const Encoder& enc);
void set_parameters(Encoder& enc, const Eigen::VectorXd& theta);

/// Loss (mean squared error over rows and active columns of the
/// standardized input Z) and its gradient with respect to parameters(enc).
std::pair<double, Eigen::VectorXd> loss_and_gradient(const Encoder& enc, const Eigen::MatrixXd& Z);

/// Trains with a fixed bottleneck (no cross-validation).
Encoder train_fixed(const Eigen::MatrixXd& X, int bottleneck, const TrainConfig& cfg);

struct BottleneckScore {
    int bottleneck = 0;
    double validation_mse = 0.0;
};

/// Chooses the bottleneck by k-fold CV over cfg.bottleneck_grid (ties to the
/// smaller width) and trains on all rows.
Encoder train_autoencoder(const FeatureMatrix& X, const TrainConfig& cfg,
                          std::vector<BottleneckScore>* cv_scores = nullptr);

Eigen::MatrixXd encode(const Encoder& enc, const Eigen::MatrixXd& X);
/// Latent rows back to the standardized feature scale.
Eigen::MatrixXd decode(const Encoder& enc, const Eigen::MatrixXd& latent);
double reconstruction_error(const Encoder& enc, const Eigen::MatrixXd& X);

/// Reconstruction MSE of the rank-h principal component projection of the
/// standardized X (trailing eigenvalue mass over n times the active width).
double pca_error(const Eigen::MatrixXd& X, int h);

/// Latent features as a FeatureMatrix named "ae1", "ae2", ...
FeatureMatrix encode_features(const Encoder& enc, const FeatureMatrix& X);

void write_encoder(std::ostream& os, const Encoder& enc);
Encoder read_encoder(std::istream& is);

}  // namespace pdxitr
