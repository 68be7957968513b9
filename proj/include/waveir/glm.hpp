#pragma once

#include <Eigen/Dense>
#include <string>

namespace waveir {

enum class Family { gaussian, binomial };

std::string to_string(Family f);
Family family_from_string(const std::string& name);

/// Deviance of 0/1 or real responses against fitted means. Gaussian is the
/// residual sum of squares; binomial is the usual 2*sum(y log(y/mu) + ...)
/// with the 0 log 0 terms dropped.
double deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, Family family);

double logistic(double eta);

struct GlmFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd linear_pred;
  Eigen::VectorXd fitted;  // means; strictly inside (0,1) for binomial
  double deviance = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::Index rank = 0;
  bool rank_deficient = false;  // minimum-norm coefficients in that case
  Eigen::MatrixXd cov;          // dispersion * pinv(X^T W X), for Wald tests
  double dispersion = 1.0;
};

/// Least squares (gaussian) or IRLS (binomial). Rank-deficient designs give
/// the minimum-norm solution and set the flag instead of failing. IRLS stops
/// when the relative deviance change drops below 1e-8, with step halving if a
/// step increases deviance; a fit that exhausts its iteration budget (perfect
/// separation does) comes back with converged = false.
GlmFit fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Family family);

/// Mean response for new rows under fitted coefficients.
Eigen::VectorXd predict_glm(const Eigen::VectorXd& coef, const Eigen::MatrixXd& X,
                            Family family);

}  // namespace waveir
