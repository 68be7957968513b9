#include "waveir/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "waveir/rng.hpp"
#include "waveir/util.hpp"

namespace waveir {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kZ975 = 1.959963984540054;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double beta_continued_fraction(double a, double b, double x) {
  constexpr double eps = 3e-16;
  constexpr double floor = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < floor) d = floor;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < floor) d = floor;
    c = 1.0 + aa / c;
    if (std::abs(c) < floor) c = floor;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < floor) d = floor;
    c = 1.0 + aa / c;
    if (std::abs(c) < floor) c = floor;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

struct Pearson {
  bool defined = false;
  double r = kNan;
};

Pearson pearson(const VectorXd& a, const VectorXd& b) {
  VectorXd ac = a.array() - a.mean();
  VectorXd bc = b.array() - b.mean();
  const double sa = ac.squaredNorm();
  const double sb = bc.squaredNorm();
  if (sa <= 0.0 || sb <= 0.0) return {};
  double r = ac.dot(bc) / std::sqrt(sa * sb);
  return {true, std::clamp(r, -1.0, 1.0)};
}

CorrRow correlation_row(std::string name, const VectorXd& t,
                        const VectorXd& eta) {
  CorrRow row;
  row.name = std::move(name);
  const Pearson p = pearson(t, eta);
  row.defined = p.defined;
  if (!p.defined) {
    row.r = row.lo = row.hi = row.p = kNan;
    return row;
  }
  row.r = p.r;
  const double n = static_cast<double>(t.size());
  const double one_minus_r2 = 1.0 - row.r * row.r;
  if (one_minus_r2 < 1e-14) {
    row.lo = row.hi = row.r;
    row.p = 0.0;
    return row;
  }
  if (n > 3.0) {
    const double z = std::atanh(row.r);
    const double half = kZ975 / std::sqrt(n - 3.0);
    row.lo = std::tanh(z - half);
    row.hi = std::tanh(z + half);
  } else {
    row.lo = -1.0;
    row.hi = 1.0;
  }
  const double dof = n - 2.0;
  const double t_stat = row.r * std::sqrt(dof / one_minus_r2);
  row.p = student_t_two_sided_p(t_stat, dof);
  return row;
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double reg_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error("beta parameters must be positive");
  if (std::isnan(x)) return kNan;
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_pre = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                        a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(ln_pre) * beta_continued_fraction(a, b, x) / a;
  return 1.0 - std::exp(ln_pre) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw Error("degrees of freedom must be positive");
  if (std::isnan(t)) return kNan;
  return reg_incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

std::string to_string(PermKind kind) {
  return kind == PermKind::response ? "response" : "pseudo";
}

PermKind perm_kind_from_string(const std::string& name) {
  if (name == "response") return PermKind::response;
  if (name == "pseudo") return PermKind::pseudo;
  throw Error("unknown permutation scheme: " + name);
}

MatrixXd pseudo_predictor_design(const MatrixXd& T, const MatrixXd& X,
                                 const std::vector<int>& perm) {
  const Index n = X.rows();
  if (T.rows() != n) throw Error("covariate row count does not match");
  if (static_cast<Index>(perm.size()) != n)
    throw Error("permutation length does not match the row count");
  std::vector<char> seen(perm.size(), 0);
  for (int p : perm) {
    if (p < 0 || p >= static_cast<int>(n) || seen[static_cast<std::size_t>(p)])
      throw Error("not a permutation of the row indices");
    seen[static_cast<std::size_t>(p)] = 1;
  }

  Eigen::ColPivHouseholderQR<MatrixXd> qr(T);
  if (qr.rank() < T.cols()) {
    std::string cols;
    const auto& pivots = qr.colsPermutation().indices();
    for (Index j = qr.rank(); j < T.cols(); ++j) {
      if (!cols.empty()) cols += ", ";
      cols += std::to_string(pivots[j]);
    }
    throw Error("covariate matrix is rank deficient; column(s) " + cols +
                " are linear combinations of the others");
  }

  bool identity = true;
  for (Index i = 0; i < n; ++i)
    if (perm[static_cast<std::size_t>(i)] != static_cast<int>(i)) {
      identity = false;
      break;
    }
  if (identity) return X;

  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(n, T.cols());
  MatrixXd fitted = Q * (Q.transpose() * X);
  MatrixXd resid = X - fitted;
  for (Index i = 0; i < n; ++i)
    fitted.row(i) += resid.row(perm[static_cast<std::size_t>(i)]);
  return fitted;
}

PermTestResult perm_test(const Dataset& data, const GridRecipe& recipe,
                         const CVConfig& cv, const PermutationScheme& scheme,
                         const FitOptions& opt) {
  validate(data);
  if (scheme.count < 1) throw Error("need at least one permutation");
  if (scheme.kind == PermKind::response && data.T.cols() > 1 &&
      !scheme.allow_response_with_covariates)
    throw Error(
        "response permutation ignores the scalar covariates; use the pseudo "
        "scheme, or override explicitly");

  const Index n = data.n();
  MatrixXd X = design_columns(data.images, recipe.use_wavelet, recipe.wavelet);
  const std::vector<EstimatorConfig> grid =
      build_grid(recipe, X, data.T, data.y, data.family);

  PermTestResult result;
  result.scheme = scheme;
  {
    CVResult obs = tune(X, data.T, data.y, data.family, grid, cv, opt);
    result.observed = obs.table[obs.best_index].score;
    result.observed_best = obs.table[obs.best_index].config;
  }

  result.null_stats.resize(static_cast<std::size_t>(scheme.count));
  result.null_best.resize(static_cast<std::size_t>(scheme.count));
  const Rng perm_rng(scheme.seed);
  CVConfig inner = cv;
  inner.threads = 1;

  parallel_for(static_cast<std::size_t>(scheme.count), cv.threads,
               [&](std::size_t b) {
    std::vector<int> perm =
        perm_rng.stream("perm", static_cast<std::uint64_t>(b))
            .permutation(static_cast<int>(n));
    CVResult res;
    if (scheme.kind == PermKind::response) {
      VectorXd yb(n);
      for (Index i = 0; i < n; ++i)
        yb[perm[static_cast<std::size_t>(i)]] = data.y[i];
      res = tune(X, data.T, yb, data.family, grid, inner, opt);
    } else {
      ImageStack permuted = data.images;
      permuted.data =
          pseudo_predictor_design(data.T, data.images.data, perm);
      MatrixXd Xb =
          design_columns(permuted, recipe.use_wavelet, recipe.wavelet);
      res = tune(Xb, data.T, data.y, data.family, grid, inner, opt);
    }
    result.null_stats[b] = res.table[res.best_index].score;
    result.null_best[b] = res.table[res.best_index].config;
  });

  int at_or_below = 0;
  for (double s : result.null_stats)
    if (s <= result.observed) ++at_or_below;
  result.p_value = (1.0 + at_or_below) / (scheme.count + 1.0);
  return result;
}

ConfounderReport confounder_diagnostics(const Dataset& data,
                                        const ImageModelFit& images_only_fit,
                                        bool with_local_overlap,
                                        double overlap_threshold) {
  validate(data);
  if (images_only_fit.core.delta.size() != 1)
    throw Error("the images-only fit must be adjusted for an intercept alone");
  if (data.images.shape != images_only_fit.grid_shape)
    throw Error("diagnostic images are on a different grid than the fit");

  const Index n = data.n();
  const Index q = data.T.cols();
  ConfounderReport report;
  report.overlap_threshold = overlap_threshold;

  GlmFit scalar = fit_glm(data.T, data.y, data.family);
  report.scalar_deviance = scalar.deviance;
  report.scalar_converged = scalar.converged;
  for (Index j = 0; j < q; ++j) {
    WaldRow row;
    row.name = j == 0 ? "(intercept)"
               : !data.covariate_names.empty()
                   ? data.covariate_names[static_cast<std::size_t>(j - 1)]
                   : "t" + std::to_string(j);
    row.estimate = scalar.coef[j];
    row.se = std::sqrt(scalar.cov(j, j));
    if (row.se > 0.0 && std::isfinite(row.se)) {
      row.lo = row.estimate - kZ975 * row.se;
      row.hi = row.estimate + kZ975 * row.se;
      row.p = 2.0 * normal_cdf(-std::abs(row.estimate / row.se));
    } else {
      row.lo = row.hi = row.p = kNan;
    }
    report.scalar_model.push_back(row);
  }

  // linear predictor of the image part alone, on the link scale
  MatrixXd X = design_columns(data.images, images_only_fit.config.use_wavelet,
                              images_only_fit.config.wavelet);
  const SparseFitCore& core = images_only_fit.core;
  VectorXd eta = VectorXd::Zero(n);
  for (std::size_t k = 0; k < core.support.size(); ++k) {
    const Index j = core.support[k];
    eta += (X.col(j).array() - core.centers[j]).matrix() *
           core.beta[static_cast<Index>(k)];
  }

  for (Index j = 1; j < q; ++j) {
    std::string name =
        !data.covariate_names.empty()
            ? data.covariate_names[static_cast<std::size_t>(j - 1)]
            : "t" + std::to_string(j);
    report.score_correlations.push_back(
        correlation_row(std::move(name), data.T.col(j), eta));
  }

  if (with_local_overlap) {
    std::vector<Index> support_voxels;
    for (std::size_t v = 0; v < images_only_fit.beta_image.size(); ++v)
      if (images_only_fit.beta_image.data[v] != 0.0)
        support_voxels.push_back(static_cast<Index>(v));
    for (Index j = 1; j < q; ++j) {
      std::size_t hits = 0;
      for (Index v : support_voxels) {
        const Pearson p = pearson(data.T.col(j), data.images.data.col(v));
        if (p.defined && std::abs(p.r) > overlap_threshold) ++hits;
      }
      report.local_overlap.push_back(
          support_voxels.empty()
              ? 0.0
              : static_cast<double>(hits) /
                    static_cast<double>(support_voxels.size()));
    }
  }
  return report;
}

}  // namespace waveir
