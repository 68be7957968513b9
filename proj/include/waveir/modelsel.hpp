#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "waveir/dataset.hpp"
#include "waveir/estimators.hpp"
#include "waveir/glm.hpp"
#include "waveir/rng.hpp"

namespace waveir {

enum class CVLoss { squared_error, deviance };
enum class Aggregate { mean, robust };

std::string to_string(CVLoss loss);
CVLoss cv_loss_from_string(const std::string& name);
std::string to_string(Aggregate agg);
Aggregate aggregate_from_string(const std::string& name);

struct CVConfig {
  int folds = 5;
  int repeats = 5;
  std::uint64_t seed = 0;
  CVLoss loss = CVLoss::deviance;
  Aggregate aggregate = Aggregate::mean;
  int threads = 1;
};

/// [rep][fold] -> ascending row indices. Folds partition 0..n-1; sizes differ
/// by at most one, the first n mod K folds being the larger ones.
using FoldAssignment = std::vector<std::vector<std::vector<Eigen::Index>>>;

FoldAssignment make_folds(Eigen::Index n, int folds, int repeats,
                          const Rng& rng);

/// fold_sums is [rep][fold] flattened. mean: grand total / (R*K).
/// robust: average over repetitions of the median fold sum.
double aggregate_fold_sums(const std::vector<double>& fold_sums, int folds,
                           int repeats, Aggregate agg);

struct ConfigScore {
  EstimatorConfig config;
  double score = 0.0;
  std::vector<double> fold_sums;  // [rep][fold]; +inf where the fit failed
  int failed_folds = 0;
};

struct CVResult {
  std::vector<ConfigScore> table;
  std::size_t best_index = 0;
  std::size_t one_se_index = 0;  // computed, not used for selection
  CVConfig cv;
};

/// Strict preference order used for exact score ties: within one method, a
/// larger penalty (net) or a smaller (keep, components) pair counts as the
/// sparser model. Configs of different methods are never comparable.
bool config_sparser(const EstimatorConfig& a, const EstimatorConfig& b);

CVResult tune_with_folds(const Eigen::MatrixXd& X, const Eigen::MatrixXd& T,
                         const Eigen::VectorXd& y, Family family,
                         const std::vector<EstimatorConfig>& grid,
                         const FoldAssignment& folds, const CVConfig& cv,
                         const FitOptions& opt = {});

CVResult tune(const Eigen::MatrixXd& X, const Eigen::MatrixXd& T,
              const Eigen::VectorXd& y, Family family,
              const std::vector<EstimatorConfig>& grid, const CVConfig& cv,
              const FitOptions& opt = {});

double cv_score(const Eigen::MatrixXd& X, const Eigen::MatrixXd& T,
                const Eigen::VectorXd& y, Family family,
                const EstimatorConfig& config, const CVConfig& cv,
                const FitOptions& opt = {});

/// Recipe for a tuning grid. For net, the lambda sequence is generated per
/// alpha from the data (log-spaced down from lambda_max); for pcr/pls the
/// grid is the cross of keeps and components with components <= keep.
struct GridRecipe {
  Method method = Method::pcr;
  bool use_wavelet = true;
  WaveletSpec wavelet;
  std::vector<int> keeps;
  std::vector<int> components;
  std::vector<double> alphas = {0.1, 0.4, 0.7, 1.0};
  int n_lambda = 100;
  double lambda_min_ratio = 1e-3;
};

std::vector<EstimatorConfig> build_grid(const GridRecipe& recipe,
                                        const Eigen::MatrixXd& X,
                                        const Eigen::MatrixXd& T,
                                        const Eigen::VectorXd& y,
                                        Family family);

CVResult tune_dataset(const Dataset& data, const GridRecipe& recipe,
                      const CVConfig& cv, const FitOptions& opt = {});

}  // namespace waveir
