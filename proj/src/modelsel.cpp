#include "waveir/modelsel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "waveir/util.hpp"

namespace waveir {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double held_out_loss(const VectorXd& y_test, const VectorXd& mu, CVLoss loss,
                     Family family) {
  if (loss == CVLoss::squared_error) return (y_test - mu).squaredNorm();
  return deviance(y_test, mu, family);
}

/// Net configs sharing an alpha are solved as one warm-started path per fold.
struct NetGroup {
  double alpha = 0.0;
  std::vector<std::size_t> members;
  std::vector<double> lambdas;
};

struct GridPlan {
  std::vector<std::size_t> singles;  // pcr / pls configs
  std::vector<NetGroup> groups;
};

GridPlan plan_grid(const std::vector<EstimatorConfig>& grid) {
  GridPlan plan;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i].method != Method::net) {
      plan.singles.push_back(i);
      continue;
    }
    auto it = std::find_if(plan.groups.begin(), plan.groups.end(),
                           [&](const NetGroup& g) {
                             return g.alpha == grid[i].alpha;
                           });
    if (it == plan.groups.end()) {
      plan.groups.push_back({grid[i].alpha, {}, {}});
      it = std::prev(plan.groups.end());
    }
    it->members.push_back(i);
    it->lambdas.push_back(grid[i].lambda);
  }
  return plan;
}

/// Standard error of the selected score, on the same scale the score uses.
double score_standard_error(const ConfigScore& cs, const CVConfig& cv) {
  if (cs.failed_folds > 0) return 0.0;
  std::vector<double> samples;
  if (cv.aggregate == Aggregate::mean) {
    samples = cs.fold_sums;
  } else {
    for (int r = 0; r < cv.repeats; ++r) {
      std::vector<double> rep(cs.fold_sums.begin() + r * cv.folds,
                              cs.fold_sums.begin() + (r + 1) * cv.folds);
      samples.push_back(median(std::move(rep)));
    }
  }
  const std::size_t m = samples.size();
  if (m < 2) return 0.0;
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / static_cast<double>(m - 1));
  return sd / std::sqrt(static_cast<double>(m));
}

}  // namespace

std::string to_string(CVLoss loss) {
  return loss == CVLoss::squared_error ? "squared-error" : "deviance";
}

CVLoss cv_loss_from_string(const std::string& name) {
  if (name == "squared-error") return CVLoss::squared_error;
  if (name == "deviance") return CVLoss::deviance;
  throw Error("unknown cv loss: " + name);
}

std::string to_string(Aggregate agg) {
  return agg == Aggregate::mean ? "mean" : "median";
}

Aggregate aggregate_from_string(const std::string& name) {
  if (name == "mean") return Aggregate::mean;
  if (name == "median") return Aggregate::robust;
  throw Error("unknown cv aggregate: " + name);
}

FoldAssignment make_folds(Index n, int folds, int repeats, const Rng& rng) {
  if (folds < 2) throw Error("need at least two folds");
  if (static_cast<Index>(folds) > n)
    throw Error("fold count exceeds the number of rows");
  if (repeats < 1) throw Error("need at least one repetition");

  FoldAssignment out(static_cast<std::size_t>(repeats));
  const Index base = n / folds;
  const Index extra = n % folds;
  for (int r = 0; r < repeats; ++r) {
    Rng stream = rng.stream("cv-folds", static_cast<std::uint64_t>(r));
    std::vector<int> perm = stream.permutation(static_cast<int>(n));
    auto& rep = out[static_cast<std::size_t>(r)];
    rep.resize(static_cast<std::size_t>(folds));
    std::size_t pos = 0;
    for (int k = 0; k < folds; ++k) {
      const Index size = base + (static_cast<Index>(k) < extra ? 1 : 0);
      auto& fold = rep[static_cast<std::size_t>(k)];
      fold.reserve(static_cast<std::size_t>(size));
      for (Index j = 0; j < size; ++j)
        fold.push_back(static_cast<Index>(perm[pos++]));
      std::sort(fold.begin(), fold.end());
    }
  }
  return out;
}

double aggregate_fold_sums(const std::vector<double>& fold_sums, int folds,
                           int repeats, Aggregate agg) {
  if (folds < 1 || repeats < 1) throw Error("invalid fold table shape");
  if (fold_sums.size() != static_cast<std::size_t>(folds) *
                              static_cast<std::size_t>(repeats))
    throw Error("fold table size mismatch");
  if (agg == Aggregate::mean) {
    double total = 0.0;
    for (double s : fold_sums) total += s;
    return total / static_cast<double>(folds * repeats);
  }
  double acc = 0.0;
  for (int r = 0; r < repeats; ++r) {
    std::vector<double> rep(fold_sums.begin() + r * folds,
                            fold_sums.begin() + (r + 1) * folds);
    acc += median(std::move(rep));
  }
  return acc / static_cast<double>(repeats);
}

bool config_sparser(const EstimatorConfig& a, const EstimatorConfig& b) {
  if (a.method != b.method) return false;
  if (a.method == Method::net) {
    if (a.lambda != b.lambda) return a.lambda > b.lambda;
    return a.alpha > b.alpha;
  }
  if (a.n_keep != b.n_keep) return a.n_keep < b.n_keep;
  return a.n_components < b.n_components;
}

CVResult tune_with_folds(const MatrixXd& X, const MatrixXd& T,
                         const VectorXd& y, Family family,
                         const std::vector<EstimatorConfig>& grid,
                         const FoldAssignment& folds, const CVConfig& cv,
                         const FitOptions& opt) {
  const Index n = X.rows();
  if (T.rows() != n || y.size() != n) throw Error("tune: row mismatch");
  if (grid.empty()) throw Error("tuning grid is empty");
  if (cv.loss == CVLoss::squared_error && family != Family::gaussian)
    throw Error("squared-error loss requires the gaussian family");
  if (folds.size() != static_cast<std::size_t>(cv.repeats))
    throw Error("fold assignment does not match the repetition count");
  for (const auto& rep : folds)
    if (rep.size() != static_cast<std::size_t>(cv.folds))
      throw Error("fold assignment does not match the fold count");

  const GridPlan plan = plan_grid(grid);
  const std::size_t n_tasks = static_cast<std::size_t>(cv.repeats) *
                              static_cast<std::size_t>(cv.folds);

  // sums[task][config]; each task owns its slot, so any thread count gives
  // identical tables
  std::vector<std::vector<double>> sums(
      n_tasks, std::vector<double>(grid.size(), kInf));

  parallel_for(n_tasks, cv.threads, [&](std::size_t task) {
    const std::size_t r = task / static_cast<std::size_t>(cv.folds);
    const std::size_t k = task % static_cast<std::size_t>(cv.folds);
    const std::vector<Index>& test_rows = folds[r][k];

    std::vector<Index> train_rows;
    train_rows.reserve(static_cast<std::size_t>(n) - test_rows.size());
    {
      std::size_t t = 0;
      for (Index i = 0; i < n; ++i) {
        if (t < test_rows.size() && test_rows[t] == i) {
          ++t;
          continue;
        }
        train_rows.push_back(i);
      }
      if (t != test_rows.size())
        throw Error("fold assignment holds an out-of-range row");
    }

    MatrixXd Xtr(static_cast<Index>(train_rows.size()), X.cols());
    MatrixXd Ttr(static_cast<Index>(train_rows.size()), T.cols());
    VectorXd ytr(static_cast<Index>(train_rows.size()));
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      Xtr.row(static_cast<Index>(i)) = X.row(train_rows[i]);
      Ttr.row(static_cast<Index>(i)) = T.row(train_rows[i]);
      ytr[static_cast<Index>(i)] = y[train_rows[i]];
    }
    MatrixXd Xte(static_cast<Index>(test_rows.size()), X.cols());
    MatrixXd Tte(static_cast<Index>(test_rows.size()), T.cols());
    VectorXd yte(static_cast<Index>(test_rows.size()));
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      Xte.row(static_cast<Index>(i)) = X.row(test_rows[i]);
      Tte.row(static_cast<Index>(i)) = T.row(test_rows[i]);
      yte[static_cast<Index>(i)] = y[test_rows[i]];
    }

    auto& slot = sums[task];
    for (std::size_t idx : plan.singles) {
      try {
        SparseFitCore fit = fit_core(Xtr, Ttr, ytr, family, grid[idx], opt);
        VectorXd mu = predict_core(fit, Tte, Xte, family);
        slot[idx] = held_out_loss(yte, mu, cv.loss, family);
      } catch (const std::exception&) {
        slot[idx] = kInf;  // failed fold; the config's score becomes +inf
      }
    }
    for (const NetGroup& group : plan.groups) {
      try {
        std::vector<SparseFitCore> path = net_path(
            Xtr, Ttr, ytr, family, group.alpha, group.lambdas, opt);
        for (std::size_t j = 0; j < group.members.size(); ++j) {
          VectorXd mu = predict_core(path[j], Tte, Xte, family);
          slot[group.members[j]] = held_out_loss(yte, mu, cv.loss, family);
        }
      } catch (const std::exception&) {
        for (std::size_t idx : group.members) slot[idx] = kInf;
      }
    }
  });

  CVResult result;
  result.cv = cv;
  result.table.resize(grid.size());
  for (std::size_t c = 0; c < grid.size(); ++c) {
    ConfigScore& cs = result.table[c];
    cs.config = grid[c];
    cs.fold_sums.resize(n_tasks);
    for (std::size_t t = 0; t < n_tasks; ++t) {
      cs.fold_sums[t] = sums[t][c];
      if (!std::isfinite(cs.fold_sums[t])) ++cs.failed_folds;
    }
    cs.score = cs.failed_folds > 0
                   ? kInf
                   : aggregate_fold_sums(cs.fold_sums, cv.folds, cv.repeats,
                                         cv.aggregate);
  }

  result.best_index = 0;
  for (std::size_t c = 1; c < grid.size(); ++c) {
    const double s = result.table[c].score;
    const double b = result.table[result.best_index].score;
    if (s < b ||
        (s == b && config_sparser(grid[c], grid[result.best_index])))
      result.best_index = c;
  }

  const double best = result.table[result.best_index].score;
  const double se = score_standard_error(result.table[result.best_index], cv);
  result.one_se_index = result.best_index;
  if (std::isfinite(best)) {
    for (std::size_t c = 0; c < grid.size(); ++c) {
      if (result.table[c].score > best + se) continue;
      if (config_sparser(grid[c], grid[result.one_se_index]))
        result.one_se_index = c;
    }
  }
  return result;
}

CVResult tune(const MatrixXd& X, const MatrixXd& T, const VectorXd& y,
              Family family, const std::vector<EstimatorConfig>& grid,
              const CVConfig& cv, const FitOptions& opt) {
  FoldAssignment folds =
      make_folds(X.rows(), cv.folds, cv.repeats, Rng(cv.seed));
  return tune_with_folds(X, T, y, family, grid, folds, cv, opt);
}

double cv_score(const MatrixXd& X, const MatrixXd& T, const VectorXd& y,
                Family family, const EstimatorConfig& config,
                const CVConfig& cv, const FitOptions& opt) {
  return tune(X, T, y, family, {config}, cv, opt).table[0].score;
}

std::vector<EstimatorConfig> build_grid(const GridRecipe& recipe,
                                        const MatrixXd& X, const MatrixXd& T,
                                        const VectorXd& y, Family family) {
  std::vector<EstimatorConfig> grid;
  EstimatorConfig base;
  base.method = recipe.method;
  base.use_wavelet = recipe.use_wavelet;
  base.wavelet = recipe.wavelet;

  if (recipe.method == Method::net) {
    if (recipe.alphas.empty()) throw Error("alpha grid is empty");
    for (double alpha : recipe.alphas) {
      const double lmax = net_lambda_max(X, T, y, family, alpha);
      for (double lambda :
           net_lambda_path(lmax, recipe.n_lambda, recipe.lambda_min_ratio)) {
        EstimatorConfig cfg = base;
        cfg.alpha = alpha;
        cfg.lambda = lambda;
        grid.push_back(cfg);
      }
    }
    return grid;
  }

  if (recipe.keeps.empty() || recipe.components.empty())
    throw Error("keep/component grid is empty");
  for (int keep : recipe.keeps)
    for (int m : recipe.components) {
      if (m > keep) continue;
      EstimatorConfig cfg = base;
      cfg.n_keep = keep;
      cfg.n_components = m;
      grid.push_back(cfg);
    }
  if (grid.empty())
    throw Error("keep/component grid has no pair with components <= keep");
  return grid;
}

CVResult tune_dataset(const Dataset& data, const GridRecipe& recipe,
                      const CVConfig& cv, const FitOptions& opt) {
  validate(data);
  MatrixXd X =
      design_columns(data.images, recipe.use_wavelet, recipe.wavelet);
  std::vector<EstimatorConfig> grid =
      build_grid(recipe, X, data.T, data.y, data.family);
  return tune(X, data.T, data.y, data.family, grid, cv, opt);
}

}  // namespace waveir
