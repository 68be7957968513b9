#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "waveir/glm.hpp"
#include "waveir/grid.hpp"
#include "waveir/wavelet.hpp"

namespace waveir {

/// Difference of two bivariate normal densities, N((30,20), 10 I) minus
/// N((20,55), 10 I), sampled on the integer lattice; the canonical domain is
/// [1,64]^2 and other shapes just widen or crop the sampling window.
Grid make_beta1(const std::vector<int>& shape = {64, 64});

/// Two-dimensional bumps: radial kernels h_j * (1 + r / (side * w_j))^-4 with
/// the classical eleven 1-d bump positions t_j mapped to centers
/// (shape[0]*t_j, shape[1]*t_reversed(j)); the t, h, w constants are frozen
/// in the implementation. Everywhere nonnegative.
Grid make_beta2(const std::vector<int>& shape = {64, 64});

/// Binary image: a centered box with side shape[t]/4 on each axis, 1 inside
/// and 0 outside (a quarter of each axis, ~6% of a 2-d grid).
Grid make_block_image(const std::vector<int>& shape);

/// Deterministic smooth stand-in for a real source stack: image i is a sum of
/// low-order separable cosine modes p in {0..5}^d \ {0}, each weighted by
/// 1/(1+|p|^2) and an N(0,1) amplitude from stream("seed-image", i).
ImageStack seed_images(const std::vector<int>& shape, int count,
                       std::uint64_t seed);

/// Predictor law learned from a seed stack: orthonormal principal directions
/// over a variance-screened wavelet support, with component variances. When
/// every axis of `shape` is a power of 2 the image-domain eigenimages are
/// orthonormal too; otherwise orthonormality lives in the coefficient domain.
struct PredictorModel {
  std::vector<int> shape;
  CoeffLayout layout;
  std::vector<Eigen::Index> support;  // ascending coefficient indices
  Eigen::MatrixXd loadings;           // |support| x J, orthonormal columns
  Eigen::VectorXd variances;          // nonnegative, non-increasing
  // screened share of excess variance, where a coefficient's excess is its
  // variance above the median coefficient variance, floored at zero
  double retained_excess = 0.0;
};

/// Transforms each seed image, keeps the n_coefs highest-variance
/// coefficients, and takes n_components principal directions of the centered
/// screened submatrix. Throws when n_components exceeds that submatrix rank.
PredictorModel fit_predictor_model(const ImageStack& seeds, int n_components,
                                   int n_coefs, const WaveletSpec& spec);

/// Component j mapped back to the image domain.
Grid eigenimage(const PredictorModel& model, int j);

/// n images x_i = sum_j c_ij rho_j with c_ij independent N(0, variances[j]),
/// drawn row by row from stream("predictor-scores").
ImageStack simulate_predictors(const PredictorModel& model, Eigen::Index n,
                               std::uint64_t seed);

struct OutcomeSpec {
  Family family = Family::gaussian;
  double target_r2 = 0.1;  // in [0, 1)
  double base_rate = 0.5;  // binomial only, in (0, 1)
  double sigma = 1.0;      // gaussian noise standard deviation
  std::uint64_t seed = 0;
};

struct ScaledCoef {
  Grid beta;
  double scale = 0.0;   // multiplier applied to the input image
  double delta0 = 0.0;  // binomial intercept; 0 for gaussian
};

/// Scales beta so the sample variance (n-1 denominator) of the image scores
/// x_i' beta over the given predictor sample equals the target ratio:
/// r2/(1-r2) * sigma^2 for gaussian, r2/(1-r2) * pi^2/3 for binomial (latent
/// logistic convention). For binomial, delta0 is then bisected so the mean of
/// expit(delta0 + x_i' beta) matches base_rate within 1e-4; r2 = 0 gives a
/// zero image with delta0 = logit(base_rate). Throws when the scores are
/// degenerate but a positive r2 is requested.
ScaledCoef scale_beta_for_r2(const Grid& beta, const ImageStack& predictors,
                             const OutcomeSpec& spec);

/// Gaussian: y = T delta + X beta + sigma * eps, eps iid standard normal.
/// Binomial: y_i ~ Bernoulli(expit(t_i' delta + delta0 + x_i' beta)).
/// delta0 enters the binomial link only; T may have zero columns. One draw
/// per observation from stream("outcome"), in row order.
Eigen::VectorXd simulate_outcomes(const ImageStack& predictors,
                                  const Grid& beta, double delta0,
                                  const Eigen::MatrixXd& T,
                                  const Eigen::VectorXd& delta,
                                  const OutcomeSpec& spec);

}  // namespace waveir
