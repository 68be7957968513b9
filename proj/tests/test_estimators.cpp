#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "waveir/estimators.hpp"
#include "waveir/rng.hpp"
#include "waveir/util.hpp"

using namespace waveir;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Index n, Index p, Rng& rng) {
  MatrixXd X(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) X(i, j) = rng.normal();
  return X;
}

/// Columns orthogonal to each other and to the intercept, each squared norm 4.
MatrixXd sign_design() {
  MatrixXd X(4, 3);
  X << 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
  return X;
}

}  // namespace

TEST_CASE("variance screening ranks centered sums of squares", "[estimators]") {
  // col0 constant (variance 0), col1 spread 8, col2 spread 2, col3 ties col2
  MatrixXd X(4, 4);
  X << 5, -2, 1, 1,
       5,  2, -1, -1,
       5, -2, 1, 1,
       5,  2, -1, -1;
  MatrixXd Xc = X.rowwise() - column_means(X).transpose();
  auto top2 = top_variance_columns(Xc, 2);
  REQUIRE(top2 == std::vector<Index>{1, 2});  // tie between 2 and 3 -> lower index
  auto top3 = top_variance_columns(Xc, 3);
  REQUIRE(top3 == std::vector<Index>{1, 2, 3});
  REQUIRE_THROWS_AS(top_variance_columns(Xc, 5), Error);
  REQUIRE_THROWS_AS(top_variance_columns(Xc, 0), Error);
}

TEST_CASE("covariance screening ranks |x^T yc|", "[estimators]") {
  MatrixXd X = sign_design();
  VectorXd y(4);
  y << 2, 0.5, -1, 0.2;  // x_j^T y = 3.3, 0.3, 2.7; centering changes nothing here
  MatrixXd Xc = X.rowwise() - column_means(X).transpose();
  auto top2 = top_covariance_columns(Xc, y, 2);
  REQUIRE(top2 == std::vector<Index>{0, 2});
}

TEST_CASE("full-component pcr equals minimum-norm least squares", "[estimators]") {
  Rng rng(31);
  const Index n = 30, N = 50;
  MatrixXd X = random_matrix(n, N, rng);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) y[i] = rng.normal();
  MatrixXd T = MatrixXd::Ones(n, 1);

  EstimatorConfig cfg;
  cfg.method = Method::pcr;
  cfg.use_wavelet = false;
  cfg.n_keep = static_cast<int>(N);
  cfg.n_components = static_cast<int>(n) - 1;  // centered rank
  SparseFitCore fit = fit_core(X, T, y, Family::gaussian, cfg);

  MatrixXd Xc = X.rowwise() - column_means(X).transpose();
  VectorXd yc = y.array() - y.mean();
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(Xc);
  VectorXd beta_ref = cod.solve(yc);

  VectorXd beta_fit = dense_beta(fit, N);
  REQUIRE((beta_fit - beta_ref).cwiseAbs().maxCoeff() < 1e-8);
  REQUIRE(fit.delta[0] == Catch::Approx(y.mean()).margin(1e-8));

  VectorXd pred = predict_core(fit, T, X, Family::gaussian);
  REQUIRE((pred - fit.fitted).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("screened pcr equals pcr on the kept submatrix", "[estimators]") {
  Rng rng(77);
  const Index n = 25, N = 40;
  MatrixXd X = random_matrix(n, N, rng);
  // inflate a few columns so screening has a clear target
  for (Index j : {3, 11, 17, 29, 35}) X.col(j) *= 6.0;
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) y[i] = rng.normal();
  MatrixXd T = MatrixXd::Ones(n, 1);

  EstimatorConfig cfg;
  cfg.method = Method::pcr;
  cfg.use_wavelet = false;
  cfg.n_keep = 5;
  cfg.n_components = 3;
  SparseFitCore fit = fit_core(X, T, y, Family::gaussian, cfg);
  REQUIRE(fit.support == std::vector<Index>{3, 11, 17, 29, 35});

  MatrixXd Xsub(n, 5);
  for (int k = 0; k < 5; ++k) Xsub.col(k) = X.col(fit.support[static_cast<std::size_t>(k)]);
  EstimatorConfig cfg_sub = cfg;
  cfg_sub.n_keep = 5;
  SparseFitCore ref = fit_core(Xsub, T, y, Family::gaussian, cfg_sub);
  REQUIRE((fit.beta - ref.beta).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((fit.fitted - ref.fitted).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("component count beyond rank is an error", "[estimators]") {
  Rng rng(4);
  MatrixXd basisA = random_matrix(20, 2, rng);
  MatrixXd mix = random_matrix(2, 10, rng);
  MatrixXd X = basisA * mix;  // rank 2 before centering
  VectorXd y(20);
  for (Index i = 0; i < 20; ++i) y[i] = rng.normal();
  REQUIRE_THROWS_AS(pca_loadings(X.rowwise() - column_means(X).transpose(), 3),
                    Error);
  REQUIRE_THROWS_AS(
      pls_loadings(X.rowwise() - column_means(X).transpose(), y, 5), Error);
}

TEST_CASE("pls components: unit directions, orthogonal scores, cov >= 0",
          "[estimators]") {
  Rng rng(13);
  const Index n = 60, N = 30;
  MatrixXd X = random_matrix(n, N, rng);
  VectorXd y = X.col(2) - 0.5 * X.col(7);
  for (Index i = 0; i < n; ++i) y[i] += 0.3 * rng.normal();
  MatrixXd Xc = X.rowwise() - column_means(X).transpose();
  VectorXd yc = y.array() - y.mean();

  MatrixXd R = pls_loadings(Xc, yc, 4);
  for (Index j = 0; j < 4; ++j)
    REQUIRE(R.col(j).norm() == Catch::Approx(1.0).margin(1e-12));

  // first direction is the normalized covariance vector
  VectorXd r1 = Xc.transpose() * yc;
  r1.normalize();
  REQUIRE((R.col(0) - r1).cwiseAbs().maxCoeff() < 1e-12);

  MatrixXd S = Xc * R;
  for (Index a = 0; a < 4; ++a) {
    REQUIRE(S.col(a).dot(yc) >= 0.0);
    for (Index b = a + 1; b < 4; ++b)
      REQUIRE(std::abs(S.col(a).dot(S.col(b))) <
              1e-8 * S.col(a).norm() * S.col(b).norm());
  }

  VectorXd flat = VectorXd::Zero(n);
  REQUIRE_THROWS_AS(pls_loadings(Xc, flat, 1), Error);
}

TEST_CASE("net matches soft-threshold closed forms on an orthogonal design",
          "[estimators]") {
  MatrixXd X = sign_design();
  VectorXd y(4);
  y << 2, 0.5, -1, 0.2;
  MatrixXd T = MatrixXd::Ones(4, 1);
  // z = x_j^T y / n = 0.825, 0.075, 0.675; intercept = mean = 0.425
  EstimatorConfig cfg;
  cfg.method = Method::net;
  cfg.use_wavelet = false;

  SECTION("lasso") {
    cfg.alpha = 1.0;
    cfg.lambda = 0.5;  // threshold 0.25
    SparseFitCore fit = fit_core(X, T, y, Family::gaussian, cfg);
    REQUIRE(fit.converged);
    REQUIRE(fit.support == std::vector<Index>{0, 2});
    REQUIRE(fit.beta[0] == Catch::Approx(0.575).margin(1e-10));
    REQUIRE(fit.beta[1] == Catch::Approx(0.425).margin(1e-10));
    REQUIRE(fit.delta[0] == Catch::Approx(y.mean()).margin(1e-10));
  }
  SECTION("ridge") {
    cfg.alpha = 0.0;
    cfg.lambda = 0.5;  // shrink factor 1/(1+0.5)
    SparseFitCore fit = fit_core(X, T, y, Family::gaussian, cfg);
    REQUIRE(fit.converged);
    REQUIRE(fit.support == std::vector<Index>{0, 1, 2});
    REQUIRE(fit.beta[0] == Catch::Approx(0.55).margin(1e-10));
    REQUIRE(fit.beta[1] == Catch::Approx(0.05).margin(1e-10));
    REQUIRE(fit.beta[2] == Catch::Approx(0.45).margin(1e-10));
  }
  SECTION("mixed") {
    cfg.alpha = 0.4;
    cfg.lambda = 0.5;  // l1 part 0.1, l2 part 0.3
    SparseFitCore fit = fit_core(X, T, y, Family::gaussian, cfg);
    REQUIRE(fit.converged);
    REQUIRE(fit.support == std::vector<Index>{0, 2});
    REQUIRE(fit.beta[0] == Catch::Approx(0.725 / 1.3).margin(1e-10));
    REQUIRE(fit.beta[1] == Catch::Approx(0.575 / 1.3).margin(1e-10));
  }
}

TEST_CASE("net satisfies its stationarity conditions on random problems",
          "[estimators]") {
  Rng rng(91);
  for (int rep = 0; rep < 6; ++rep) {
    const Index n = 40, N = 120;
    MatrixXd X = random_matrix(n, N, rng);
    MatrixXd T(n, 2);
    T.col(0).setOnes();
    for (Index i = 0; i < n; ++i) T(i, 1) = rng.normal();
    VectorXd lin = 0.8 * X.col(5) - 1.2 * X.col(50) + 0.5 * T.col(1);
    Family family = rep % 2 == 0 ? Family::gaussian : Family::binomial;
    VectorXd y(n);
    for (Index i = 0; i < n; ++i)
      y[i] = family == Family::gaussian
                 ? lin[i] + 0.5 * rng.normal()
                 : (rng.uniform() < logistic(lin[i]) ? 1.0 : 0.0);

    const double alpha = rep % 3 == 0 ? 1.0 : (rep % 3 == 1 ? 0.35 : 0.0);
    const double lmax = net_lambda_max(X, T, y, family, alpha);
    EstimatorConfig cfg;
    cfg.method = Method::net;
    cfg.use_wavelet = false;
    cfg.alpha = alpha;
    cfg.lambda = 0.1 * lmax;
    SparseFitCore fit = fit_core(X, T, y, family, cfg);
    REQUIRE(fit.converged);
    double kkt = net_kkt_residual(X, T, y, family, fit, alpha, cfg.lambda);
    REQUIRE(kkt < 1e-6);
  }
}

TEST_CASE("lambda_max is the smallest all-zero penalty", "[estimators]") {
  MatrixXd X = sign_design();
  VectorXd y(4);
  y << 2, 0.5, -1, 0.2;
  MatrixXd T = MatrixXd::Ones(4, 1);
  // max |x_j^T (y - mean)| = 3.3, n = 4: lambda_max = 2*3.3/4 = 1.65
  const double lmax = net_lambda_max(X, T, y, Family::gaussian, 1.0);
  REQUIRE(lmax == Catch::Approx(1.65).margin(1e-12));

  EstimatorConfig cfg;
  cfg.method = Method::net;
  cfg.use_wavelet = false;
  cfg.alpha = 1.0;
  cfg.lambda = lmax * 1.000001;
  SparseFitCore at = fit_core(X, T, y, Family::gaussian, cfg);
  REQUIRE(at.support.empty());

  cfg.lambda = lmax * 0.98;
  SparseFitCore below = fit_core(X, T, y, Family::gaussian, cfg);
  REQUIRE_FALSE(below.support.empty());
}

TEST_CASE("lambda path is log-spaced and descending", "[estimators]") {
  auto path = net_lambda_path(2.0, 5, 1e-2);
  REQUIRE(path.size() == 5);
  REQUIRE(path.front() == Catch::Approx(2.0));
  REQUIRE(path.back() == Catch::Approx(0.02).margin(1e-12));
  for (std::size_t i = 1; i < path.size(); ++i) {
    REQUIRE(path[i] < path[i - 1]);
    // constant ratio
    REQUIRE(path[i] / path[i - 1] ==
            Catch::Approx(path[1] / path[0]).margin(1e-12));
  }
  REQUIRE_THROWS_AS(net_lambda_path(0.0, 5, 1e-2), Error);
}

TEST_CASE("prediction centers new rows with training centers", "[estimators]") {
  Rng rng(3);
  const Index n = 30, N = 12;
  MatrixXd X = random_matrix(n, N, rng);
  X.col(4).array() += 7.0;  // off-center column
  VectorXd y = X.col(4) * 0.9;
  for (Index i = 0; i < n; ++i) y[i] += 0.1 * rng.normal();
  MatrixXd T = MatrixXd::Ones(n, 1);

  EstimatorConfig cfg;
  cfg.method = Method::net;
  cfg.use_wavelet = false;
  cfg.alpha = 1.0;
  cfg.lambda = 0.05;
  SparseFitCore fit = fit_core(X, T, y, Family::gaussian, cfg);

  MatrixXd Xnew = random_matrix(5, N, rng);
  VectorXd pred = predict_core(fit, MatrixXd::Ones(5, 1), Xnew, Family::gaussian);
  for (Index i = 0; i < 5; ++i) {
    double manual = fit.delta[0];
    for (std::size_t k = 0; k < fit.support.size(); ++k) {
      const Index j = fit.support[k];
      manual += (Xnew(i, j) - fit.centers[j]) * fit.beta[static_cast<Index>(k)];
    }
    REQUIRE(pred[i] == Catch::Approx(manual).margin(1e-12));
  }

  // a fit restored with centers known only on the support predicts identically
  SparseFitCore trimmed = fit;
  trimmed.centers = VectorXd::Zero(N);
  for (std::size_t k = 0; k < fit.support.size(); ++k)
    trimmed.centers[fit.support[k]] = fit.centers[fit.support[k]];
  VectorXd pred2 = predict_core(trimmed, MatrixXd::Ones(5, 1), Xnew, Family::gaussian);
  REQUIRE((pred - pred2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unscreened pcr and pls are basis-invariant under the transform",
          "[estimators]") {
  Rng rng(8);
  Dataset data;
  data.images.shape = {8, 8};
  data.images.data = random_matrix(40, 64, rng);
  data.y.resize(40);
  for (Index i = 0; i < 40; ++i)
    data.y[i] = data.images.data(i, 20) - data.images.data(i, 43) + 0.2 * rng.normal();
  data.T = MatrixXd::Ones(40, 1);
  data.family = Family::gaussian;

  for (Method method : {Method::pcr, Method::pls}) {
    EstimatorConfig vox;
    vox.method = method;
    vox.use_wavelet = false;
    vox.n_keep = 64;
    vox.n_components = 5;
    EstimatorConfig wav = vox;
    wav.use_wavelet = true;
    wav.wavelet = WaveletSpec{WaveletFamily::daub_least_asymmetric, 10, 1};

    ImageModelFit fv = fit_image_model(data, vox);
    ImageModelFit fw = fit_image_model(data, wav);
    for (std::size_t v = 0; v < fv.beta_image.size(); ++v)
      REQUIRE(fw.beta_image.data[v] ==
              Catch::Approx(fv.beta_image.data[v]).margin(1e-8));

    VectorXd pv = predict(fv, data.T, data.images);
    VectorXd pw = predict(fw, data.T, data.images);
    REQUIRE((pv - pw).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("dataset validation catches structural problems", "[estimators]") {
  Dataset data;
  data.y.resize(3);
  data.y << 0, 1, 0;
  data.T = MatrixXd::Ones(3, 1);
  data.images.shape = {2, 2};
  data.images.data = MatrixXd::Zero(3, 4);
  data.family = Family::binomial;
  REQUIRE_NOTHROW(validate(data));

  Dataset no_intercept = data;
  no_intercept.T(1, 0) = 2.0;
  REQUIRE_THROWS_AS(validate(no_intercept), Error);

  Dataset bad_y = data;
  bad_y.y[0] = 0.5;
  REQUIRE_THROWS_AS(validate(bad_y), Error);

  Dataset short_images = data;
  short_images.images.data = MatrixXd::Zero(2, 4);
  REQUIRE_THROWS_AS(validate(short_images), Error);
}
