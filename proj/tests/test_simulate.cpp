#include "waveir/simulate.hpp"

#include <cmath>
#include <cstddef>

#include <catch2/catch_amalgamated.hpp>

#include "waveir/estimators.hpp"
#include "waveir/glm.hpp"
#include "waveir/rng.hpp"
#include "waveir/util.hpp"
#include "waveir/wavelet.hpp"

using namespace waveir;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Eigen::Map<const VectorXd> as_vector(const Grid& g) {
  return Eigen::Map<const VectorXd>(g.data.data(),
                                    static_cast<Index>(g.data.size()));
}

constexpr double kBumpPosT[] = {0.1,  0.13, 0.15, 0.23, 0.25, 0.40,
                                0.44, 0.65, 0.76, 0.78, 0.81};

}  // namespace

TEST_CASE("difference-of-gaussians image matches its closed form") {
  Grid img = make_beta1();
  REQUIRE(img.shape == std::vector<int>({64, 64}));

  auto at = [&](int s1, int s2) {
    return img.data[static_cast<std::size_t>((s1 - 1) * 64 + (s2 - 1))];
  };
  // peak of the first density; the second contributes < 1e-20 there
  REQUIRE(at(30, 20) == Catch::Approx(0.015915494309189534).margin(1e-15));
  std::size_t argmax = 0;
  for (std::size_t i = 0; i < img.size(); ++i)
    if (img.data[i] > img.data[argmax]) argmax = i;
  REQUIRE(argmax == static_cast<std::size_t>(29 * 64 + 19));

  REQUIRE(at(20, 55) == Catch::Approx(-at(30, 20)).margin(1e-12));

  // the second density center sits 2.8 sd from the top edge, so the window
  // loses ~1.3e-3 of its mass; the per-pixel mean still vanishes to 1e-6
  double sum = 0.0;
  for (double v : img.data) sum += v;
  REQUIRE(sum == Catch::Approx(0.001277733748158435).margin(1e-9));
  REQUIRE(std::abs(sum) / static_cast<double>(img.size()) < 1e-6);
}

TEST_CASE("bumps image is nonnegative with maxima at the frozen centers") {
  Grid img = make_beta2();
  for (double v : img.data) REQUIRE(v >= 0.0);
  Grid again = make_beta2();
  REQUIRE(again.data == img.data);

  // the narrowest kernels span under a pixel at 64 but a 128 lattice
  // resolves every bump, so each center pixel dominates its neighborhood
  Grid fine = make_beta2({128, 128});
  auto at = [&](long r, long c) {
    return fine.data[static_cast<std::size_t>(r * 128 + c)];
  };
  for (int j = 0; j < 11; ++j) {
    const long r0 = std::lround(128.0 * kBumpPosT[j]) - 1;
    const long c0 = std::lround(128.0 * kBumpPosT[10 - j]) - 1;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        REQUIRE(at(r0, c0) > at(r0 + dr, c0 + dc));
      }
  }
}

TEST_CASE("block image is a centered binary box") {
  Grid img = make_block_image({64, 64});
  std::size_t ones = 0;
  for (double v : img.data) {
    REQUIRE((v == 0.0 || v == 1.0));
    if (v == 1.0) ++ones;
  }
  REQUIRE(ones == 16u * 16u);
  auto at = [&](int r, int c) {
    return img.data[static_cast<std::size_t>(r * 64 + c)];
  };
  REQUIRE(at(24, 24) == 1.0);
  REQUIRE(at(39, 39) == 1.0);
  REQUIRE(at(23, 30) == 0.0);
  REQUIRE(at(40, 30) == 0.0);
  REQUIRE(at(30, 23) == 0.0);
  REQUIRE(at(30, 40) == 0.0);

  Grid cube = make_block_image({8, 8, 8});
  double total = 0.0;
  for (double v : cube.data) total += v;
  REQUIRE(total == 8.0);  // 2^3 block
}

TEST_CASE("predictor model recovers orthogonal seed directions") {
  WaveletSpec spec;
  spec.j0 = 2;
  CoeffLayout layout = make_layout({16, 16}, spec);
  REQUIRE(layout.size == 256u);

  const Index coef_at[3] = {7, 100, 201};
  const double amp[3] = {5.0, 3.0, 2.0};
  ImageStack seeds;
  seeds.shape = {16, 16};
  seeds.data.resize(6, 256);
  for (int k = 0; k < 3; ++k) {
    VectorXd e = VectorXd::Zero(256);
    e[coef_at[k]] = amp[k];
    Grid img = idwt(e, layout);
    seeds.data.row(2 * k) = as_vector(img).transpose();
    seeds.data.row(2 * k + 1) = -as_vector(img).transpose();
  }

  PredictorModel model = fit_predictor_model(seeds, 3, 256, spec);
  REQUIRE(model.support.size() == 256u);
  // amplitude a in a +/- pair gives sample variance 2 a^2 / (n - 1)
  REQUIRE(model.variances[0] == Catch::Approx(10.0).margin(1e-10));
  REQUIRE(model.variances[1] == Catch::Approx(3.6).margin(1e-10));
  REQUIRE(model.variances[2] == Catch::Approx(1.6).margin(1e-10));
  for (int k = 0; k < 3; ++k)
    REQUIRE(model.loadings(coef_at[k], k) == Catch::Approx(1.0).margin(1e-8));

  for (int k = 0; k < 3; ++k) {
    Grid rho = eigenimage(model, k);
    const VectorXd e = as_vector(rho);
    const VectorXd s = seeds.data.row(2 * k).transpose();
    const double cosine = e.dot(s) / (e.norm() * s.norm());
    REQUIRE(cosine == Catch::Approx(1.0).margin(1e-8));
  }

  REQUIRE_THROWS_AS(fit_predictor_model(seeds, 4, 256, spec), Error);
  REQUIRE_THROWS_AS(fit_predictor_model(seeds, 1, 257, spec), Error);

  // excess-variance capture grows with the screened set and tops out at 1
  REQUIRE(model.retained_excess == 1.0);
  const double r1 = fit_predictor_model(seeds, 1, 1, spec).retained_excess;
  const double r2 = fit_predictor_model(seeds, 1, 2, spec).retained_excess;
  REQUIRE(r1 == Catch::Approx(10.0 / 15.2).margin(1e-9));
  REQUIRE(r2 == Catch::Approx(13.6 / 15.2).margin(1e-9));
  REQUIRE(r1 < r2);
  REQUIRE(r2 < 1.0);
}

TEST_CASE("seed stack is deterministic and yields an orthonormal model") {
  ImageStack a = seed_images({16, 16}, 12, 99);
  ImageStack b = seed_images({16, 16}, 12, 99);
  REQUIRE(a.data == b.data);
  REQUIRE(a.data.rows() == 12);
  REQUIRE(a.data.cols() == 256);
  REQUIRE((a.data.row(0) - a.data.row(1)).cwiseAbs().maxCoeff() > 1e-8);
  ImageStack c = seed_images({16, 16}, 12, 100);
  REQUIRE((a.data - c.data).cwiseAbs().maxCoeff() > 1e-8);

  WaveletSpec spec;
  spec.j0 = 2;
  PredictorModel model = fit_predictor_model(a, 4, 60, spec);
  REQUIRE(model.variances.size() == 4);
  for (int j = 0; j < 4; ++j) REQUIRE(model.variances[j] >= 0.0);
  for (int j = 1; j < 4; ++j)
    REQUIRE(model.variances[j] <= model.variances[j - 1]);

  MatrixXd G = model.loadings.transpose() * model.loadings;
  REQUIRE((G - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);

  MatrixXd E(4, 256);
  for (int j = 0; j < 4; ++j)
    E.row(j) = as_vector(eigenimage(model, j)).transpose();
  MatrixXd GE = E * E.transpose();
  REQUIRE((GE - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("simulated predictors follow the component law") {
  WaveletSpec spec;
  spec.j0 = 2;
  ImageStack seeds = seed_images({16, 16}, 12, 7);
  PredictorModel model = fit_predictor_model(seeds, 3, 60, spec);

  PredictorModel flat = model;
  flat.variances.setZero();
  ImageStack zero = simulate_predictors(flat, 20, 1);
  REQUIRE(zero.data.isZero(0.0));

  ImageStack x1 = simulate_predictors(model, 40, 5);
  ImageStack x2 = simulate_predictors(model, 40, 5);
  REQUIRE(x1.data == x2.data);
  ImageStack x3 = simulate_predictors(model, 40, 6);
  REQUIRE((x1.data - x3.data).cwiseAbs().maxCoeff() > 1e-8);

  MatrixXd E(3, 256);
  for (int j = 0; j < 3; ++j)
    E.row(j) = as_vector(eigenimage(model, j)).transpose();

  // every draw lies in the span of the eigenimages
  MatrixXd proj = (x1.data * E.transpose()) * E;
  REQUIRE((x1.data - proj).norm() / x1.data.norm() < 1e-8);

  const Index n = 10000;
  ImageStack big = simulate_predictors(model, n, 11);
  MatrixXd scores = big.data * E.transpose();
  VectorXd mean = scores.colwise().mean();
  MatrixXd centered = scores.rowwise() - mean.transpose();
  const double v0 = centered.col(0).squaredNorm() / static_cast<double>(n - 1);
  REQUIRE(std::abs(v0 - model.variances[0]) < 0.05 * model.variances[0]);
  const double cov01 =
      centered.col(0).dot(centered.col(1)) / static_cast<double>(n - 1);
  REQUIRE(std::abs(cov01) <
          0.05 * std::sqrt(model.variances[0] * model.variances[1]));
}

TEST_CASE("coefficient scaling hits the target variance ratio") {
  ImageStack stack = seed_images({16, 16}, 30, 21);
  Grid beta = make_block_image({16, 16});

  OutcomeSpec spec;
  spec.family = Family::gaussian;
  spec.target_r2 = 0.3;
  ScaledCoef scaled = scale_beta_for_r2(beta, stack, spec);
  REQUIRE(scaled.delta0 == 0.0);
  VectorXd s = stack.data * as_vector(scaled.beta);
  double mu = s.mean();
  double var = (s.array() - mu).square().sum() / (s.size() - 1.0);
  REQUIRE(var == Catch::Approx(0.3 / 0.7).epsilon(1e-8));

  spec.sigma = 2.0;
  scaled = scale_beta_for_r2(beta, stack, spec);
  s = stack.data * as_vector(scaled.beta);
  mu = s.mean();
  var = (s.array() - mu).square().sum() / (s.size() - 1.0);
  REQUIRE(var == Catch::Approx(4.0 * 0.3 / 0.7).epsilon(1e-8));

  spec.sigma = 1.0;
  spec.target_r2 = 0.0;
  spec.family = Family::binomial;
  spec.base_rate = 0.25;
  scaled = scale_beta_for_r2(beta, stack, spec);
  REQUIRE(scaled.scale == 0.0);
  for (double v : scaled.beta.data) REQUIRE(v == 0.0);
  REQUIRE(scaled.delta0 == Catch::Approx(std::log(0.25 / 0.75)).margin(1e-12));

  spec.target_r2 = 0.2;
  scaled = scale_beta_for_r2(beta, stack, spec);
  s = stack.data * as_vector(scaled.beta);
  mu = s.mean();
  var = (s.array() - mu).square().sum() / (s.size() - 1.0);
  const double latent = M_PI * M_PI / 3.0;
  REQUIRE(var == Catch::Approx(0.25 * latent).epsilon(1e-8));
  double rate = 0.0;
  for (Index i = 0; i < s.size(); ++i) rate += logistic(scaled.delta0 + s[i]);
  rate /= static_cast<double>(s.size());
  REQUIRE(std::abs(rate - 0.25) <= 1e-4);
}

TEST_CASE("scaling edge cases are rejected or exact") {
  // +/- paired rows make the scores exactly symmetric about zero
  Rng rng(77);
  ImageStack stack;
  stack.shape = {8};
  stack.data.resize(20, 8);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 8; ++j) stack.data(2 * i, j) = rng.normal();
    stack.data.row(2 * i + 1) = -stack.data.row(2 * i);
  }
  Grid beta({8});
  beta.data[2] = 1.5;

  OutcomeSpec spec;
  spec.family = Family::binomial;
  spec.target_r2 = 0.15;
  spec.base_rate = 0.5;
  ScaledCoef scaled = scale_beta_for_r2(beta, stack, spec);
  REQUIRE(std::abs(scaled.delta0) < 1e-3);

  ImageStack constant;
  constant.shape = {8};
  constant.data = MatrixXd::Ones(6, 8);
  REQUIRE_THROWS_AS(scale_beta_for_r2(beta, constant, spec), Error);

  OutcomeSpec bad = spec;
  bad.target_r2 = 1.0;
  REQUIRE_THROWS_AS(scale_beta_for_r2(beta, stack, bad), Error);
  bad.target_r2 = -0.1;
  REQUIRE_THROWS_AS(scale_beta_for_r2(beta, stack, bad), Error);
  bad.target_r2 = 0.2;
  bad.base_rate = 1.0;
  REQUIRE_THROWS_AS(scale_beta_for_r2(beta, stack, bad), Error);

  OutcomeSpec noiseless;
  noiseless.family = Family::gaussian;
  noiseless.target_r2 = 0.2;
  noiseless.sigma = 0.0;
  REQUIRE_THROWS_AS(scale_beta_for_r2(beta, stack, noiseless), Error);
}

TEST_CASE("outcome generator honors the linear predictor and the seed") {
  Rng rng(31);
  const Index n = 12;
  ImageStack stack;
  stack.shape = {4};
  stack.data.resize(n, 4);
  for (Index i = 0; i < n; ++i)
    for (int j = 0; j < 4; ++j) stack.data(i, j) = rng.normal();
  Grid beta({4});
  beta.data = {0.5, -1.0, 0.25, 0.0};
  MatrixXd T(n, 2);
  T.col(0).setOnes();
  for (Index i = 0; i < n; ++i) T(i, 1) = rng.normal();
  VectorXd delta(2);
  delta << 0.5, -0.25;

  OutcomeSpec spec;
  spec.family = Family::gaussian;
  spec.sigma = 0.0;
  VectorXd y = simulate_outcomes(stack, beta, 0.0, T, delta, spec);
  VectorXd eta = T * delta + stack.data * as_vector(beta);
  REQUIRE((y.array() == eta.array()).all());

  spec.sigma = 1.0;
  spec.seed = 4;
  VectorXd y1 = simulate_outcomes(stack, beta, 0.0, T, delta, spec);
  VectorXd y2 = simulate_outcomes(stack, beta, 0.0, T, delta, spec);
  REQUIRE(y1 == y2);
  spec.seed = 5;
  VectorXd y3 = simulate_outcomes(stack, beta, 0.0, T, delta, spec);
  REQUIRE((y1 - y3).cwiseAbs().maxCoeff() > 1e-10);

  REQUIRE_THROWS_AS(
      simulate_outcomes(stack, beta, 0.0, T, VectorXd::Zero(1), spec), Error);
}

TEST_CASE("binomial outcomes match their probabilities") {
  const Index n = 1000;
  ImageStack stack;
  stack.shape = {2};
  stack.data = MatrixXd::Zero(n, 2);
  Grid beta({2});

  OutcomeSpec spec;
  spec.family = Family::binomial;
  spec.seed = 17;
  VectorXd y = simulate_outcomes(stack, beta, 0.0, MatrixXd(), VectorXd(), spec);
  double rate = 0.0;
  for (Index i = 0; i < n; ++i) {
    REQUIRE((y[i] == 0.0 || y[i] == 1.0));
    rate += y[i];
  }
  rate /= static_cast<double>(n);
  REQUIRE(std::abs(rate - 0.5) < 3.0 * 0.5 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("a scalar covariate effect is recovered by a logistic refit") {
  const Index n = 2000;
  Rng rng(53);
  VectorXd t(n);
  for (Index i = 0; i < n; ++i) t[i] = rng.normal();
  const double mu = t.mean();
  const double vt = (t.array() - mu).square().sum() / (n - 1.0);
  // submodel variance ratio 0.2 under the latent logistic convention
  const double delta1 = std::sqrt(0.25 * M_PI * M_PI / 3.0 / vt);

  ImageStack stack;
  stack.shape = {2};
  stack.data = MatrixXd::Zero(n, 2);
  Grid beta({2});
  MatrixXd T(n, 1);
  T.col(0) = t;
  VectorXd delta(1);
  delta << delta1;

  OutcomeSpec spec;
  spec.family = Family::binomial;
  spec.seed = 29;
  VectorXd y = simulate_outcomes(stack, beta, 0.0, T, delta, spec);

  MatrixXd X(n, 2);
  X.col(0).setOnes();
  X.col(1) = t;
  GlmFit fit = fit_glm(X, y, Family::binomial);
  REQUIRE(fit.converged);
  const double se = std::sqrt(fit.cov(1, 1));
  REQUIRE(std::abs(fit.coef[1] - delta1) < 3.0 * se);
}

TEST_CASE("scaled coefficients land near the target r2 end to end") {
  WaveletSpec spec;
  spec.j0 = 2;
  ImageStack seeds = seed_images({16, 16}, 12, 3);
  PredictorModel model = fit_predictor_model(seeds, 4, 60, spec);
  Grid beta = make_beta2({16, 16});

  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Index n = 5000;
    ImageStack x = simulate_predictors(model, n, seed);
    OutcomeSpec out;
    out.family = Family::gaussian;
    out.target_r2 = 0.25;
    out.seed = seed + 100;
    ScaledCoef scaled = scale_beta_for_r2(beta, x, out);
    VectorXd y =
        simulate_outcomes(x, scaled.beta, 0.0, MatrixXd(), VectorXd(), out);
    VectorXd s = x.data * as_vector(scaled.beta);
    VectorXd eps = y - s;
    auto var = [](const VectorXd& v) {
      const double m = v.mean();
      return (v.array() - m).square().sum() / (v.size() - 1.0);
    };
    const double r2_hat = var(s) / (var(s) + var(eps));
    REQUIRE(std::abs(r2_hat - 0.25) < 0.03);
  }
}
