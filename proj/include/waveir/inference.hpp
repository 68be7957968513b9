#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "waveir/dataset.hpp"
#include "waveir/estimators.hpp"
#include "waveir/modelsel.hpp"

namespace waveir {

double normal_cdf(double z);

/// I_x(a, b), continued-fraction evaluation, a, b > 0, x in [0, 1].
double reg_incomplete_beta(double a, double b, double x);

/// P(|T_dof| >= |t|).
double student_t_two_sided_p(double t, double dof);

enum class PermKind { response, pseudo };

std::string to_string(PermKind kind);
PermKind perm_kind_from_string(const std::string& name);

struct PermutationScheme {
  PermKind kind = PermKind::pseudo;
  int count = 99;  // number of permutations
  std::uint64_t seed = 0;
  // permuting responses ignores scalar covariates, so it is refused when T
  // has any unless explicitly allowed
  bool allow_response_with_covariates = false;
};

struct PermTestResult {
  double observed = 0.0;
  std::vector<double> null_stats;
  double p_value = 1.0;
  PermutationScheme scheme;
  EstimatorConfig observed_best;
  std::vector<EstimatorConfig> null_best;
};

/// Rows of X with the covariate-explained part kept in place and the
/// residual part permuted: P_T X + perm-gathered (I - P_T) X. The identity
/// permutation returns X unchanged.
Eigen::MatrixXd pseudo_predictor_design(const Eigen::MatrixXd& T,
                                        const Eigen::MatrixXd& X,
                                        const std::vector<int>& perm);

/// Test statistic is the minimized CV score over the recipe's grid; the same
/// grid (built once from the observed design) is re-searched for every
/// permutation. Smaller is better, so the p-value counts null statistics at
/// or below the observed one, with the add-one correction.
PermTestResult perm_test(const Dataset& data, const GridRecipe& recipe,
                         const CVConfig& cv, const PermutationScheme& scheme,
                         const FitOptions& opt = {});

struct WaldRow {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double p = 1.0;
};

struct CorrRow {
  std::string name;
  bool defined = false;  // false when either side is constant
  double r = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double p = 1.0;
};

struct ConfounderReport {
  std::vector<WaldRow> scalar_model;  // per coefficient of y ~ T
  double scalar_deviance = 0.0;
  bool scalar_converged = false;
  // per non-intercept covariate: correlation with the images-only linear
  // predictor (covariates excluded from that fit)
  std::vector<CorrRow> score_correlations;
  std::vector<double> local_overlap;  // per covariate; empty unless requested
  double overlap_threshold = 0.0;
};

ConfounderReport confounder_diagnostics(const Dataset& data,
                                        const ImageModelFit& images_only_fit,
                                        bool with_local_overlap = false,
                                        double overlap_threshold = 0.3);

}  // namespace waveir
