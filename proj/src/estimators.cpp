#include "waveir/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "waveir/util.hpp"

namespace waveir {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kZeroCol = 1e-30;  // squared-norm floor; below this a column is dead

void fix_component_signs(MatrixXd& V) {
  for (Index j = 0; j < V.cols(); ++j) {
    Index imax = 0;
    double vmax = 0.0;
    for (Index i = 0; i < V.rows(); ++i) {
      const double a = std::abs(V(i, j));
      if (a > vmax) {
        vmax = a;
        imax = i;
      }
    }
    if (V(imax, j) < 0.0) V.col(j) = -V.col(j);
  }
}

std::vector<Index> top_ranked(const VectorXd& score, int keep) {
  if (keep < 1) throw Error("screening size must be positive");
  if (keep > score.size())
    throw Error("screening size exceeds available columns");
  std::vector<Index> order(static_cast<std::size_t>(score.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return score[a] > score[b];  // stable: ties keep the lower index first
  });
  order.resize(static_cast<std::size_t>(keep));
  std::sort(order.begin(), order.end());
  return order;
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

struct CdResult {
  int sweeps = 0;
  bool converged = false;
};

/// Coordinate descent for (1/2n)|y - X b|^2 + lam1 |b|_1 + (lam2/2) |b|_2^2
/// on the T-profiled problem (columns already centered and projected).
/// Active-set cycling with full KKT passes; done when no violation exceeds
/// kkt_tol.
CdResult cd_gaussian(const MatrixXd& X, const VectorXd& y, double lam1,
                     double lam2, VectorXd& beta, double kkt_tol,
                     int max_sweeps) {
  const Index n = X.rows();
  const Index N = X.cols();
  const double dn = static_cast<double>(n);

  VectorXd cn2(N);
  for (Index j = 0; j < N; ++j) cn2[j] = X.col(j).squaredNorm() / dn;

  VectorXd r = y;
  std::vector<Index> active;
  for (Index j = 0; j < N; ++j)
    if (beta[j] != 0.0) {
      if (cn2[j] < kZeroCol) {
        beta[j] = 0.0;
        continue;
      }
      r -= X.col(j) * beta[j];
      active.push_back(j);
    }

  std::vector<char> in_active(static_cast<std::size_t>(N), 0);
  for (Index j : active) in_active[static_cast<std::size_t>(j)] = 1;

  CdResult res;
  const double inner_tol = 0.1 * kkt_tol;
  while (res.sweeps < max_sweeps) {
    double move = std::numeric_limits<double>::infinity();
    while (move > inner_tol && res.sweeps < max_sweeps) {
      ++res.sweeps;
      move = 0.0;
      for (Index j : active) {
        const double bj = beta[j];
        const double rho = X.col(j).dot(r) / dn + cn2[j] * bj;
        const double bnew = soft_threshold(rho, lam1) / (cn2[j] + lam2);
        if (bnew != bj) {
          r += X.col(j) * (bj - bnew);
          beta[j] = bnew;
          move = std::max(move, std::abs(bnew - bj) * (cn2[j] + lam2));
        }
      }
      if (active.empty()) break;
    }

    VectorXd g = X.transpose() * r / dn;
    double worst = 0.0;
    for (Index j = 0; j < N; ++j) {
      if (cn2[j] < kZeroCol) continue;
      double viol;
      if (beta[j] != 0.0) {
        const double sign = beta[j] > 0.0 ? 1.0 : -1.0;
        viol = std::abs(g[j] - lam2 * beta[j] - lam1 * sign);
      } else {
        viol = std::max(0.0, std::abs(g[j]) - lam1);
      }
      worst = std::max(worst, viol);
      if (viol > kkt_tol && !in_active[static_cast<std::size_t>(j)]) {
        in_active[static_cast<std::size_t>(j)] = 1;
        active.push_back(j);
      }
    }
    if (worst <= kkt_tol) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

double net_penalty(const VectorXd& beta, double alpha, double lambda) {
  return 0.5 * lambda *
         (alpha * beta.lpNorm<1>() + (1.0 - alpha) * beta.squaredNorm());
}

struct BinomialNetState {
  int iterations = 0;
  bool converged = false;
};

/// One lambda of the binomial net: outer quadratic approximations around the
/// current linear predictor, inner profiled coordinate descent, steps
/// accepted only if the penalized deviance does not increase. delta/beta are
/// warm starts and are updated in place.
BinomialNetState net_binomial_solve(const MatrixXd& Xc, const MatrixXd& T,
                                    const VectorXd& y, double alpha,
                                    double lambda, VectorXd& delta,
                                    VectorXd& beta, const FitOptions& opt) {
  const Index n = Xc.rows();
  const Index N = Xc.cols();
  const double dn = static_cast<double>(n);
  const double lam1 = 0.5 * lambda * alpha;
  const double lam2 = lambda * (1.0 - alpha);

  VectorXd eta = T * delta + Xc * beta;
  auto objective = [&](const VectorXd& e, const VectorXd& b) {
    VectorXd mu = e.unaryExpr([](double v) { return logistic(v); })
                      .cwiseMax(1e-15)
                      .cwiseMin(1.0 - 1e-15);
    return deviance(y, mu, Family::binomial) / (2.0 * dn) +
           net_penalty(b, alpha, lambda);
  };
  double obj = objective(eta, beta);

  BinomialNetState st;
  VectorXd w(n), z(n), sw(n);
  for (int outer = 1; outer <= opt.max_outer; ++outer) {
    st.iterations = outer;
    VectorXd mu = eta.unaryExpr([](double v) { return logistic(v); })
                      .cwiseMax(1e-15)
                      .cwiseMin(1.0 - 1e-15);
    for (Index i = 0; i < n; ++i) {
      w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-9);
      z[i] = eta[i] + (y[i] - mu[i]) / w[i];
      sw[i] = std::sqrt(w[i]);
    }
    MatrixXd Tw = sw.asDiagonal() * T;
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(Tw);
    const MatrixXd proj = cod.pseudoInverse();
    VectorXd zw = sw.cwiseProduct(z);
    MatrixXd Xw = sw.asDiagonal() * Xc;
    VectorXd zp = zw - Tw * (proj * zw);
    MatrixXd Xp = Xw - Tw * (proj * Xw);

    VectorXd beta_prev = beta;
    VectorXd delta_prev = delta;
    cd_gaussian(Xp, zp, lam1, lam2, beta, opt.kkt_tol, opt.max_sweeps);
    delta = proj * (zw - Xw * beta);

    VectorXd eta_new = T * delta + Xc * beta;
    double obj_new = objective(eta_new, beta);
    int halvings = 0;
    while ((!std::isfinite(obj_new) || obj_new > obj + 1e-12) && halvings < 20) {
      beta = 0.5 * (beta + beta_prev);
      delta = 0.5 * (delta + delta_prev);
      eta_new = T * delta + Xc * beta;
      obj_new = objective(eta_new, beta);
      ++halvings;
    }
    eta = eta_new;

    // exact stationarity of the true objective decides convergence
    VectorXd mu_new = eta.unaryExpr([](double v) { return logistic(v); })
                          .cwiseMax(1e-15)
                          .cwiseMin(1.0 - 1e-15);
    VectorXd resid = mu_new - y;
    double worst = (T.transpose() * resid).cwiseAbs().maxCoeff() / dn;
    VectorXd g = Xc.transpose() * resid / dn;
    for (Index j = 0; j < N; ++j) {
      double viol;
      if (beta[j] != 0.0) {
        const double sign = beta[j] > 0.0 ? 1.0 : -1.0;
        viol = std::abs(g[j] + lam2 * beta[j] + lam1 * sign);
      } else {
        viol = std::max(0.0, std::abs(g[j]) - lam1);
      }
      worst = std::max(worst, viol);
    }
    if (worst <= opt.kkt_tol) {
      st.converged = true;
      break;
    }
    if (std::abs(obj - obj_new) < 1e-14 * (std::abs(obj) + 1e-14)) break;
    obj = obj_new;
  }
  return st;
}

SparseFitCore assemble_core(const VectorXd& beta_dense, const VectorXd& delta,
                            const VectorXd& centers, const MatrixXd& Xc,
                            const MatrixXd& T, const VectorXd& y, Family family,
                            bool converged, int iterations, bool rank_deficient) {
  SparseFitCore fit;
  fit.centers = centers;
  fit.delta = delta;
  for (Index j = 0; j < beta_dense.size(); ++j)
    if (beta_dense[j] != 0.0) fit.support.push_back(j);
  fit.beta.resize(static_cast<Index>(fit.support.size()));
  for (std::size_t k = 0; k < fit.support.size(); ++k)
    fit.beta[static_cast<Index>(k)] = beta_dense[fit.support[k]];
  fit.converged = converged;
  fit.iterations = iterations;
  fit.rank_deficient = rank_deficient;
  VectorXd eta = T * delta + Xc * beta_dense;
  fit.fitted = family == Family::gaussian
                   ? eta
                   : eta.unaryExpr([](double v) { return logistic(v); })
                         .cwiseMax(1e-15)
                         .cwiseMin(1.0 - 1e-15);
  fit.deviance = deviance(y, fit.fitted, family);
  return fit;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::pcr:
      return "pcr";
    case Method::pls:
      return "pls";
    case Method::net:
      return "net";
  }
  throw Error("unknown method");
}

Method method_from_string(const std::string& name) {
  if (name == "pcr") return Method::pcr;
  if (name == "pls") return Method::pls;
  if (name == "net") return Method::net;
  throw Error("unknown method: " + name);
}

VectorXd column_means(const MatrixXd& X) {
  if (X.rows() < 1) throw Error("cannot average an empty matrix");
  return X.colwise().mean();
}

std::vector<Index> top_variance_columns(const MatrixXd& Xc, int keep) {
  VectorXd ss = Xc.colwise().squaredNorm();
  return top_ranked(ss, keep);
}

std::vector<Index> top_covariance_columns(const MatrixXd& Xc, const VectorXd& y,
                                          int keep) {
  if (y.size() != Xc.rows()) throw Error("response length mismatch");
  VectorXd yc = y.array() - y.mean();
  VectorXd score = (Xc.transpose() * yc).cwiseAbs();
  return top_ranked(score, keep);
}

MatrixXd pca_loadings_upto(const MatrixXd& Xc, int m, int* achieved) {
  if (m < 1) throw Error("component count must be positive");
  Eigen::BDCSVD<MatrixXd> svd(Xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  const double tol = sv.size() > 0
                         ? sv[0] * std::numeric_limits<double>::epsilon() *
                               static_cast<double>(std::max(Xc.rows(), Xc.cols()))
                         : 0.0;
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) ++rank;
  const int got = static_cast<int>(std::min<Index>(rank, m));
  if (achieved) *achieved = got;
  if (got == 0) return MatrixXd(Xc.cols(), 0);
  MatrixXd V = svd.matrixV().leftCols(got);
  fix_component_signs(V);
  return V;
}

MatrixXd pca_loadings(const MatrixXd& Xc, int m) {
  int got = 0;
  MatrixXd V = pca_loadings_upto(Xc, m, &got);
  if (got < m)
    throw Error("requested " + std::to_string(m) + " components but rank is " +
                std::to_string(got));
  return V;
}

MatrixXd pls_loadings_upto(const MatrixXd& Xc, const VectorXd& y, int m,
                           int* achieved) {
  if (m < 1) throw Error("component count must be positive");
  if (y.size() != Xc.rows()) throw Error("response length mismatch");
  const Index c = Xc.cols();
  VectorXd g0 = Xc.transpose() * y;
  const double scale = g0.norm();
  MatrixXd R(c, m);
  MatrixXd U(c, m);  // orthonormalized Xc^T t_k, the constraint directions
  int got = 0;
  for (int j = 0; j < m && scale > 0.0; ++j) {
    VectorXd g = g0;
    for (int pass = 0; pass < 2; ++pass)
      for (int k = 0; k < j; ++k) g -= U.col(k) * U.col(k).dot(g);
    const double gn = g.norm();
    if (gn <= 1e-10 * scale) break;
    R.col(j) = g / gn;
    VectorXd t = Xc * R.col(j);
    VectorXd u = Xc.transpose() * t;
    for (int pass = 0; pass < 2; ++pass)
      for (int k = 0; k < j; ++k) u -= U.col(k) * U.col(k).dot(u);
    const double un = u.norm();
    if (un <= 1e-12 * scale) break;
    U.col(j) = u / un;
    got = j + 1;
  }
  if (achieved) *achieved = got;
  return R.leftCols(got);
}

MatrixXd pls_loadings(const MatrixXd& Xc, const VectorXd& y, int m) {
  int got = 0;
  MatrixXd R = pls_loadings_upto(Xc, y, m, &got);
  if (got == 0) throw Error("response is uncorrelated with every column");
  if (got < m)
    throw Error("response is uncorrelated with the remaining column space "
                "after " + std::to_string(got) + " components");
  return R;
}

std::vector<SparseFitCore> net_path(const MatrixXd& X, const MatrixXd& T,
                                    const VectorXd& y, Family family,
                                    double alpha,
                                    const std::vector<double>& lambdas,
                                    const FitOptions& opt) {
  if (alpha < 0.0 || alpha > 1.0) throw Error("alpha must lie in [0, 1]");
  if (lambdas.empty()) throw Error("lambda list is empty");
  for (double l : lambdas)
    if (!(l >= 0.0)) throw Error("lambda must be nonnegative");
  const Index n = X.rows();
  if (T.rows() != n || y.size() != n) throw Error("net_path: row mismatch");
  if (n < 2) throw Error("net_path: need at least two rows");
  const Index N = X.cols();

  VectorXd centers = column_means(X);
  MatrixXd Xc = X.rowwise() - centers.transpose();

  std::vector<std::size_t> order(lambdas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return lambdas[a] > lambdas[b];
  });

  std::vector<SparseFitCore> out(lambdas.size());
  VectorXd beta = VectorXd::Zero(N);

  if (family == Family::gaussian) {
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(T);
    const bool rank_def = cod.rank() < T.cols();
    const MatrixXd proj = cod.pseudoInverse();
    VectorXd yp = y - T * (proj * y);
    MatrixXd Xp = Xc - T * (proj * Xc);
    for (std::size_t idx : order) {
      const double lambda = lambdas[idx];
      CdResult cd = cd_gaussian(Xp, yp, 0.5 * lambda * alpha,
                                lambda * (1.0 - alpha), beta, opt.kkt_tol,
                                opt.max_sweeps);
      VectorXd delta = proj * (y - Xc * beta);
      out[idx] = assemble_core(beta, delta, centers, Xc, T, y, family,
                               cd.converged, cd.sweeps, rank_def);
    }
    return out;
  }

  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(T);
  const bool rank_def = cod.rank() < T.cols();
  VectorXd delta = fit_glm(T, y, Family::binomial).coef;
  for (std::size_t idx : order) {
    BinomialNetState st = net_binomial_solve(Xc, T, y, alpha, lambdas[idx],
                                             delta, beta, opt);
    out[idx] = assemble_core(beta, delta, centers, Xc, T, y, family,
                             st.converged, st.iterations, rank_def);
  }
  return out;
}

SparseFitCore fit_core(const MatrixXd& X, const MatrixXd& T, const VectorXd& y,
                       Family family, const EstimatorConfig& cfg,
                       const FitOptions& opt) {
  const Index n = X.rows();
  if (T.rows() != n || y.size() != n) throw Error("fit_core: row mismatch");
  if (n < 2) throw Error("fit_core: need at least two rows");
  const Index q = T.cols();

  if (cfg.method == Method::net)
    return net_path(X, T, y, family, cfg.alpha, {cfg.lambda}, opt)[0];

  SparseFitCore fit;
  fit.centers = column_means(X);
  MatrixXd Xc = X.rowwise() - fit.centers.transpose();

  // pcr / pls: screen, build components, then an ordinary glm on [T scores]
  const int m = cfg.n_components;
  fit.support = cfg.method == Method::pcr
                    ? top_variance_columns(Xc, cfg.n_keep)
                    : top_covariance_columns(Xc, y, cfg.n_keep);
  MatrixXd Xsel(n, static_cast<Index>(fit.support.size()));
  for (std::size_t k = 0; k < fit.support.size(); ++k)
    Xsel.col(static_cast<Index>(k)) = Xc.col(fit.support[k]);

  fit.loadings = cfg.method == Method::pcr ? pca_loadings(Xsel, m)
                                           : pls_loadings(Xsel, y, m);
  MatrixXd scores = Xsel * fit.loadings;

  MatrixXd design(n, q + m);
  design.leftCols(q) = T;
  design.rightCols(m) = scores;
  GlmFit gf = fit_glm(design, y, family);

  fit.delta = gf.coef.head(q);
  fit.beta = fit.loadings * gf.coef.tail(m);
  fit.fitted = gf.fitted;
  fit.deviance = gf.deviance;
  fit.converged = gf.converged;
  fit.iterations = gf.iterations;
  fit.rank_deficient = gf.rank_deficient;
  return fit;
}

VectorXd predict_core(const SparseFitCore& fit, const MatrixXd& T,
                      const MatrixXd& X, Family family) {
  if (T.rows() != X.rows()) throw Error("predict_core: row mismatch");
  if (T.cols() != fit.delta.size()) throw Error("predict_core: covariate mismatch");
  VectorXd eta = T * fit.delta;
  for (std::size_t k = 0; k < fit.support.size(); ++k) {
    const Index j = fit.support[k];
    if (j >= X.cols()) throw Error("predict_core: column index out of range");
    const double b = fit.beta[static_cast<Index>(k)];
    eta += (X.col(j).array() - fit.centers[j]).matrix() * b;
  }
  if (family == Family::gaussian) return eta;
  return eta.unaryExpr([](double v) { return logistic(v); });
}

VectorXd dense_beta(const SparseFitCore& fit, Index n_columns) {
  VectorXd b = VectorXd::Zero(n_columns);
  for (std::size_t k = 0; k < fit.support.size(); ++k) {
    if (fit.support[k] >= n_columns)
      throw Error("dense_beta: support exceeds column count");
    b[fit.support[k]] = fit.beta[static_cast<Index>(k)];
  }
  return b;
}

double net_lambda_max(const MatrixXd& X, const MatrixXd& T, const VectorXd& y,
                      Family family, double alpha) {
  const double a = std::max(alpha, 0.001);  // ridge still needs a finite anchor
  const Index n = X.rows();
  GlmFit null_fit = fit_glm(T, y, family);
  VectorXd resid = y - null_fit.fitted;
  VectorXd centers = column_means(X);
  VectorXd g = X.transpose() * resid - centers * resid.sum();
  return 2.0 * g.cwiseAbs().maxCoeff() / (static_cast<double>(n) * a);
}

std::vector<double> net_lambda_path(double lambda_max, int count,
                                    double min_ratio) {
  if (count < 1) throw Error("path length must be positive");
  if (!(lambda_max > 0.0)) throw Error("lambda_max must be positive");
  if (!(min_ratio > 0.0 && min_ratio < 1.0))
    throw Error("min_ratio must be inside (0, 1)");
  std::vector<double> path(static_cast<std::size_t>(count));
  if (count == 1) {
    path[0] = lambda_max;
    return path;
  }
  const double step = std::log(min_ratio) / static_cast<double>(count - 1);
  for (int i = 0; i < count; ++i)
    path[static_cast<std::size_t>(i)] = lambda_max * std::exp(step * i);
  return path;
}

double net_kkt_residual(const MatrixXd& X, const MatrixXd& T, const VectorXd& y,
                        Family family, const SparseFitCore& fit, double alpha,
                        double lambda) {
  const Index n = X.rows();
  const double dn = static_cast<double>(n);
  const double lam1 = 0.5 * lambda * alpha;
  const double lam2 = lambda * (1.0 - alpha);
  VectorXd mu = predict_core(fit, T, X, family);
  VectorXd resid = mu - y;
  double worst = (T.transpose() * resid).cwiseAbs().maxCoeff() / dn;
  VectorXd g = (X.transpose() * resid - fit.centers * resid.sum()) / dn;
  VectorXd beta = dense_beta(fit, X.cols());
  for (Index j = 0; j < X.cols(); ++j) {
    double viol;
    if (beta[j] != 0.0) {
      const double sign = beta[j] > 0.0 ? 1.0 : -1.0;
      viol = std::abs(g[j] + lam2 * beta[j] + lam1 * sign);
    } else {
      viol = std::max(0.0, std::abs(g[j]) - lam1);
    }
    worst = std::max(worst, viol);
  }
  return worst;
}

MatrixXd design_columns(const ImageStack& images, bool use_wavelet,
                        const WaveletSpec& spec, CoeffLayout* layout_out) {
  if (use_wavelet) {
    StackCoeffs sc = dwt_stack(images, spec);
    if (layout_out) *layout_out = sc.layout;
    return std::move(sc.coeffs);
  }
  MatrixXd X = images.data;
  if (!images.mask.empty())
    for (Index v = 0; v < X.cols(); ++v)
      if (!images.mask[static_cast<std::size_t>(v)]) X.col(v).setZero();
  if (layout_out) *layout_out = CoeffLayout{};
  return X;
}

ImageModelFit fit_image_model(const Dataset& data, const EstimatorConfig& cfg,
                              const FitOptions& opt) {
  validate(data);
  ImageModelFit out;
  out.config = cfg;
  out.family = data.family;
  out.grid_shape = data.images.shape;

  MatrixXd X = design_columns(data.images, cfg.use_wavelet, cfg.wavelet,
                              &out.layout);
  out.core = fit_core(X, data.T, data.y, data.family, cfg, opt);

  VectorXd dense = dense_beta(out.core, X.cols());
  if (cfg.use_wavelet) {
    out.beta_image = idwt(dense, out.layout);
  } else {
    out.beta_image = Grid(data.images.shape);
    for (std::size_t v = 0; v < out.beta_image.size(); ++v)
      out.beta_image.data[v] = dense[static_cast<Index>(v)];
  }
  if (!data.images.mask.empty())
    for (std::size_t v = 0; v < out.beta_image.size(); ++v)
      if (!data.images.mask[v]) out.beta_image.data[v] = 0.0;
  return out;
}

VectorXd predict(const ImageModelFit& fit, const MatrixXd& T,
                 const ImageStack& images) {
  if (images.shape != fit.grid_shape)
    throw Error("prediction images are on a different grid");
  CoeffLayout layout;
  MatrixXd X = design_columns(images, fit.config.use_wavelet, fit.config.wavelet,
                              &layout);
  if (fit.config.use_wavelet && !(layout == fit.layout))
    throw Error("prediction transform layout does not match the fit");
  return predict_core(fit.core, T, X, fit.family);
}

}  // namespace waveir
