#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "waveir/glm.hpp"
#include "waveir/rng.hpp"
#include "waveir/util.hpp"

using namespace waveir;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("deviance closed forms", "[glm]") {
  VectorXd y(2), mu(2);
  y << 1, 2;
  mu << 0, 0;
  REQUIRE(deviance(y, mu, Family::gaussian) == Catch::Approx(5.0));

  VectorXd yb(2), mub(2);
  yb << 1, 0;
  mub << 0.5, 0.5;
  // 2*(log 2 + log 2) = 2.772588722239781
  REQUIRE(deviance(yb, mub, Family::binomial) ==
          Catch::Approx(2.772588722239781).margin(1e-12));

  VectorXd bad(2);
  bad << 0.5, 1;
  REQUIRE_THROWS_AS(deviance(bad, mub, Family::binomial), Error);
}

TEST_CASE("gaussian fit matches normal equations by hand", "[glm]") {
  // X = [1 x] with x = 0,1,2 and y = 1,2,4: slope 1.5, intercept 5/6,
  // RSS = 1/6, se(slope) = sqrt((1/6)*(3/6)) = sqrt(1/12)
  MatrixXd X(3, 2);
  X << 1, 0, 1, 1, 1, 2;
  VectorXd y(3);
  y << 1, 2, 4;
  GlmFit fit = fit_glm(X, y, Family::gaussian);
  REQUIRE(fit.coef[0] == Catch::Approx(5.0 / 6.0).margin(1e-12));
  REQUIRE(fit.coef[1] == Catch::Approx(1.5).margin(1e-12));
  REQUIRE(fit.deviance == Catch::Approx(1.0 / 6.0).margin(1e-12));
  REQUIRE(fit.dispersion == Catch::Approx(1.0 / 6.0).margin(1e-12));
  REQUIRE(std::sqrt(fit.cov(1, 1)) == Catch::Approx(std::sqrt(1.0 / 12.0)).margin(1e-10));
  REQUIRE(fit.rank == 2);
  REQUIRE_FALSE(fit.rank_deficient);
  REQUIRE(fit.converged);
}

TEST_CASE("intercept-only logistic fit has closed form", "[glm]") {
  // mean 3/4: coef log(3), deviance 2*(3 log(4/3) + log 4), se = 1/sqrt(n p(1-p))
  MatrixXd X = MatrixXd::Ones(4, 1);
  VectorXd y(4);
  y << 1, 1, 0, 1;
  GlmFit fit = fit_glm(X, y, Family::binomial);
  REQUIRE(fit.converged);
  REQUIRE(fit.coef[0] == Catch::Approx(std::log(3.0)).margin(1e-6));
  const double dev = 2.0 * (3.0 * std::log(4.0 / 3.0) + std::log(4.0));
  REQUIRE(fit.deviance == Catch::Approx(dev).margin(1e-8));
  REQUIRE(std::sqrt(fit.cov(0, 0)) ==
          Catch::Approx(1.0 / std::sqrt(4.0 * 0.1875)).margin(1e-5));
  for (Eigen::Index i = 0; i < 4; ++i) {
    REQUIRE(fit.fitted[i] > 0.0);
    REQUIRE(fit.fitted[i] < 1.0);
    REQUIRE(fit.fitted[i] == Catch::Approx(0.75).margin(1e-6));
  }
}

TEST_CASE("logistic fit zeroes the score equations", "[glm]") {
  Rng rng(17);
  const int n = 80;
  MatrixXd X(n, 3);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    X(i, 2) = rng.normal();
    double p = logistic(0.3 + 0.8 * X(i, 1) - 0.5 * X(i, 2));
    y[i] = rng.uniform() < p ? 1.0 : 0.0;
  }
  GlmFit fit = fit_glm(X, y, Family::binomial);
  REQUIRE(fit.converged);
  VectorXd score = X.transpose() * (y - fit.fitted);
  REQUIRE(score.cwiseAbs().maxCoeff() < 1e-7);
  REQUIRE(deviance(y, fit.fitted, Family::binomial) ==
          Catch::Approx(fit.deviance).margin(1e-10));

  VectorXd pred = predict_glm(fit.coef, X, Family::binomial);
  REQUIRE((pred - fit.fitted).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("duplicated column gives minimum-norm coefficients", "[glm]") {
  Rng rng(5);
  const int n = 40;
  MatrixXd X(n, 3);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    X(i, 2) = X(i, 1);
    y[i] = 2.0 + 0.7 * X(i, 1) + 0.1 * rng.normal();
  }
  GlmFit fit = fit_glm(X, y, Family::gaussian);
  REQUIRE(fit.rank == 2);
  REQUIRE(fit.rank_deficient);
  // minimum-norm splits the shared direction evenly
  REQUIRE(fit.coef[1] == Catch::Approx(fit.coef[2]).margin(1e-10));

  MatrixXd X2 = X.leftCols(2);
  GlmFit ref = fit_glm(X2, y, Family::gaussian);
  REQUIRE((fit.fitted - ref.fitted).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE(fit.coef[1] + fit.coef[2] == Catch::Approx(ref.coef[1]).margin(1e-10));
}

TEST_CASE("perfect separation is flagged, fit still usable", "[glm]") {
  MatrixXd X(4, 2);
  X << 1, -2, 1, -1, 1, 1, 1, 2;
  VectorXd y(4);
  y << 0, 0, 1, 1;
  GlmFit fit = fit_glm(X, y, Family::binomial);
  REQUIRE_FALSE(fit.converged);
  REQUIRE(fit.iterations == 100);
  REQUIRE(fit.deviance < 1e-4);  // saturates toward zero
  for (Eigen::Index i = 0; i < 4; ++i) {
    REQUIRE(fit.fitted[i] > 0.0);
    REQUIRE(fit.fitted[i] < 1.0);
  }
}
