#include "../support.hpp"
#include "pdxitr/autoencoder.hpp"

#include <doctest.h>

#include <sstream>

using namespace pdxitr;

TEST_CASE("property: the analytic gradient matches central differences") {
    oracle::Gen g(1);
    for (int rep = 0; rep < 10; ++rep) {
        const Index n = g.integer(3, 12), p = g.integer(2, 6);
        const Eigen::MatrixXd X = g.matrix(n, p);
        const Encoder enc = init_encoder(X, g.integer(1, 2), g.integer(2, 5), static_cast<std::uint64_t>(rep));
        const Eigen::MatrixXd Z = enc.standardize(X);
        const auto [loss, grad] = loss_and_gradient(enc, Z);
        const Eigen::VectorXd theta = parameters(enc);
        auto f = [&](const Eigen::VectorXd& t) {
            Encoder e = enc;
            set_parameters(e, t);
            return loss_and_gradient(e, Z).first;
        };
        CHECK(loss == doctest::Approx(f(theta)).epsilon(1e-14));
        const Eigen::VectorXd num = oracle::numeric_gradient(f, theta);
        CHECK((grad - num).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("constant columns are held at zero and ignored") {
    oracle::Gen g(2);
    Eigen::MatrixXd X = g.matrix(20, 4);
    X.col(2).setConstant(7.0);
    const Encoder enc = init_encoder(X, 1, 3, 0);
    CHECK(enc.active()(2) == false);
    CHECK(enc.standardize(X).col(2).isZero());
    const Eigen::MatrixXd Z = enc.standardize(X);
    const auto [loss, grad] = loss_and_gradient(enc, Z);
    CHECK(std::isfinite(loss));
    CHECK(grad.allFinite());
    Eigen::MatrixXd X2 = X;
    X2.col(2).setConstant(-3.0);
    CHECK(reconstruction_error(enc, X2) == doctest::Approx(reconstruction_error(enc, X)));
}

TEST_CASE("a zero decoder reconstructs with unit error") {
    oracle::Gen g(3);
    const Eigen::MatrixXd X = g.matrix(30, 5);
    Encoder enc = init_encoder(X, 2, 4, 1);
    enc.weights.back().setZero();
    enc.biases.back().setZero();
    CHECK(reconstruction_error(enc, X) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("PCA error agrees with an explicit rank-h projection") {
    oracle::Gen g(4);
    for (int rep = 0; rep < 10; ++rep) {
        const Index n = g.integer(8, 30), p = g.integer(2, 6);
        const Eigen::MatrixXd X = g.matrix(n, p);
        Eigen::MatrixXd Z = X.rowwise() - X.colwise().mean();
        for (Index k = 0; k < p; ++k) Z.col(k) /= std::sqrt(Z.col(k).squaredNorm() / static_cast<double>(n));
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
        for (int h = 1; h < p; ++h) {
            const Eigen::MatrixXd V = svd.matrixV().leftCols(h);
            const Eigen::MatrixXd recon = Z * V * V.transpose();
            const double want = (Z - recon).squaredNorm() / static_cast<double>(n * p);
            CHECK(pca_error(X, h) == doctest::Approx(want).epsilon(1e-9).scale(1.0));
        }
        CHECK_THROWS_AS(pca_error(X, static_cast<int>(p)), ValidationError);
    }
}

TEST_CASE("training lowers the error on a curve and the encoder round trips") {
    oracle::Gen g(5);
    Eigen::MatrixXd X(120, 4);
    for (Index i = 0; i < X.rows(); ++i) {
        const double t = g.uniform(-1, 1);
        for (Index k = 0; k < 4; ++k) X(i, k) = std::sin((1.0 + 0.5 * k) * t + 0.3 * k) + g.normal(0.1);
    }
    TrainConfig cfg;
    cfg.epochs = 300;
    const Encoder init = init_encoder(X, 1, 4, cfg.seed);
    const Encoder enc = train_fixed(X, 1, cfg);
    CHECK(enc.training_mse < reconstruction_error(init, X));
    CHECK(enc.training_mse == doctest::Approx(reconstruction_error(enc, X)));
    CHECK(encode(enc, X).cols() == 1);

    std::stringstream ss;
    write_encoder(ss, enc);
    const Encoder back = read_encoder(ss);
    CHECK(encode(back, X) == encode(enc, X));
    CHECK(back.feature_names == enc.feature_names);

    const Encoder again = train_fixed(X, 1, cfg);
    CHECK(parameters(again) == parameters(enc));
}

TEST_CASE("bottleneck selection by cross-validation") {
    oracle::Gen g(6);
    FeatureMatrix fm;
    fm.values = g.matrix(40, 3);
    for (Index j = 0; j < 40; ++j) fm.line_ids.push_back("L" + std::to_string(j));
    fm.feature_names = {"A.rna", "B.rna", "C.rna"};
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.cv_folds = 3;
    cfg.bottleneck_grid = {1, 2};
    std::vector<BottleneckScore> scores;
    const Encoder enc = train_autoencoder(fm, cfg, &scores);
    REQUIRE(scores.size() == 2);
    const int best = scores[0].validation_mse <= scores[1].validation_mse ? 1 : 2;
    CHECK(enc.bottleneck() == best);
    const auto latent = encode_features(enc, fm);
    CHECK(latent.feature_names.front() == "ae1");
    CHECK(latent.line_ids == fm.line_ids);
    cfg.bottleneck_grid = {0};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
