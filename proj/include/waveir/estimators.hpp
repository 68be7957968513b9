#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "waveir/dataset.hpp"
#include "waveir/glm.hpp"
#include "waveir/wavelet.hpp"

namespace waveir {

enum class Method { pcr, pls, net };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

/// One estimator configuration. `n_keep` (screening size) and `n_components`
/// apply to pcr/pls; `alpha`/`lambda` apply to net. With `use_wavelet` off the
/// estimator runs directly on voxels, which is the comparison baseline.
struct EstimatorConfig {
  Method method = Method::pcr;
  bool use_wavelet = true;
  WaveletSpec wavelet;
  int n_keep = 0;
  int n_components = 0;
  double alpha = 1.0;
  double lambda = 0.0;

  bool operator==(const EstimatorConfig&) const = default;
};

Eigen::VectorXd column_means(const Eigen::MatrixXd& X);

/// Indices (ascending) of the `keep` columns with the largest centered sum of
/// squares; rank ties go to the lower index.
std::vector<Eigen::Index> top_variance_columns(const Eigen::MatrixXd& Xc, int keep);

/// Same, ranked by |x_j^T (y - ybar)| over centered columns.
std::vector<Eigen::Index> top_covariance_columns(const Eigen::MatrixXd& Xc,
                                                 const Eigen::VectorXd& y, int keep);

/// Right singular vectors of the centered matrix, one column per component,
/// signs fixed so each column's largest-magnitude entry is positive (first
/// such entry on ties). Throws if m exceeds the numerical rank.
Eigen::MatrixXd pca_loadings(const Eigen::MatrixXd& Xc, int m);

/// Like pca_loadings but never throws on rank: returns loadings for
/// min(m, rank) components and reports how many were achievable. Column j of
/// the result is identical to column j from any larger request.
Eigen::MatrixXd pca_loadings_upto(const Eigen::MatrixXd& Xc, int m, int* achieved);

/// Unit-norm direction vectors r_1..r_m where r_j maximizes cov(y, Xc r)
/// subject to r being orthogonal to Xc^T (Xc r_k) for k < j. Scores Xc r_j
/// come out exactly orthogonal and each has nonnegative covariance with y.
/// Throws when the response is uncorrelated with the remaining column space.
Eigen::MatrixXd pls_loadings(const Eigen::MatrixXd& Xc, const Eigen::VectorXd& y,
                             int m);

/// Prefix-stable variant of pls_loadings; stops early instead of throwing
/// when the covariance is exhausted and reports the achieved count.
Eigen::MatrixXd pls_loadings_upto(const Eigen::MatrixXd& Xc,
                                  const Eigen::VectorXd& y, int m, int* achieved);

struct FitOptions {
  double kkt_tol = 1e-7;  // net stopping criterion, max gradient violation
  int max_sweeps = 200000;
  int max_outer = 100;
};

/// Fitted coefficients in the (possibly transformed) column space. `support`
/// is ascending; `beta` is aligned with it. `centers` keeps every column mean
/// so predictions can center incoming rows the same way. For pcr/pls the
/// support is the screened set and `loadings` maps component coefficients
/// back to columns; net leaves `loadings` empty.
struct SparseFitCore {
  Eigen::VectorXd delta;
  std::vector<Eigen::Index> support;
  Eigen::VectorXd beta;
  Eigen::VectorXd centers;
  Eigen::MatrixXd loadings;
  Eigen::VectorXd fitted;
  double deviance = 0.0;
  bool converged = true;
  int iterations = 0;
  bool rank_deficient = false;
};

/// Fits one configuration on raw (uncentered) transformed rows X against
/// response y with unpenalized design T. The net path solves
///   deviance/(2n) + (lambda/2) * (alpha*|beta|_1 + (1-alpha)*|beta|_2^2)
/// with T unpenalized, by coordinate descent on the T-profiled problem;
/// convergence means every KKT violation is below opt.kkt_tol.
SparseFitCore fit_core(const Eigen::MatrixXd& X, const Eigen::MatrixXd& T,
                       const Eigen::VectorXd& y, Family family,
                       const EstimatorConfig& cfg, const FitOptions& opt = {});

/// Mean responses for new rows; only support columns and their centers enter.
Eigen::VectorXd predict_core(const SparseFitCore& fit, const Eigen::MatrixXd& T,
                             const Eigen::MatrixXd& X, Family family);

/// Solves the net at every lambda in `lambdas` (any order), warm-starting
/// along the internally sorted descending path. Result i corresponds to
/// lambdas[i]. Shared centering and projection make this much cheaper than
/// separate fit_core calls.
std::vector<SparseFitCore> net_path(const Eigen::MatrixXd& X,
                                    const Eigen::MatrixXd& T,
                                    const Eigen::VectorXd& y, Family family,
                                    double alpha,
                                    const std::vector<double>& lambdas,
                                    const FitOptions& opt = {});

/// Rows of the estimator design for an image stack: packed wavelet
/// coefficients, or masked voxels when `use_wavelet` is off.
Eigen::MatrixXd design_columns(const ImageStack& images, bool use_wavelet,
                               const WaveletSpec& spec,
                               CoeffLayout* layout_out = nullptr);

Eigen::VectorXd dense_beta(const SparseFitCore& fit, Eigen::Index n_columns);

/// Smallest lambda whose net solution is all-zero beta:
///   2 * max_j |xc_j^T (y - mu_null)| / (n * alpha)
/// where mu_null is the T-only fit. alpha below 0.001 is clamped to 0.001 for
/// this computation so a pure ridge grid still has a finite anchor.
double net_lambda_max(const Eigen::MatrixXd& X, const Eigen::MatrixXd& T,
                      const Eigen::VectorXd& y, Family family, double alpha);

/// Log-spaced descending path from lambda_max to lambda_max * min_ratio.
std::vector<double> net_lambda_path(double lambda_max, int count,
                                    double min_ratio = 1e-3);

/// Largest KKT violation of the net objective at the fitted point; the delta
/// block contributes its unpenalized gradient.
double net_kkt_residual(const Eigen::MatrixXd& X, const Eigen::MatrixXd& T,
                        const Eigen::VectorXd& y, Family family,
                        const SparseFitCore& fit, double alpha, double lambda);

/// Image-level wrapper: transforms the stack (or not), fits, and maps the
/// coefficients back to an image-domain map on the original grid.
struct ImageModelFit {
  SparseFitCore core;
  EstimatorConfig config;
  Family family = Family::gaussian;
  CoeffLayout layout;            // meaningful when config.use_wavelet
  std::vector<int> grid_shape;
  Grid beta_image;
};

ImageModelFit fit_image_model(const Dataset& data, const EstimatorConfig& cfg,
                              const FitOptions& opt = {});

Eigen::VectorXd predict(const ImageModelFit& fit, const Eigen::MatrixXd& T,
                        const ImageStack& images);

}  // namespace waveir
