#include "waveir/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "waveir/estimators.hpp"
#include "waveir/rng.hpp"
#include "waveir/util.hpp"

namespace waveir {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = 3.14159265358979323846;

// classical 1-d bumps constants: positions, heights, widths
constexpr double kBumpT[] = {0.1,  0.13, 0.15, 0.23, 0.25, 0.40,
                             0.44, 0.65, 0.76, 0.78, 0.81};
constexpr double kBumpH[] = {4.0, 5.0, 3.0, 4.0, 5.0, 4.2,
                             2.1, 4.3, 3.1, 5.1, 4.2};
constexpr double kBumpW[] = {0.005, 0.005, 0.006, 0.01,  0.01, 0.03,
                             0.01,  0.01,  0.005, 0.008, 0.005};
constexpr int kBumps = 11;

void require_2d(const std::vector<int>& shape, const char* what) {
  if (shape.size() != 2 || shape[0] < 1 || shape[1] < 1)
    throw Error(std::string(what) + " needs a 2-d shape");
}

double logit(double p) { return std::log(p / (1.0 - p)); }

VectorXd image_scores(const ImageStack& stack, const Grid& beta) {
  if (beta.shape != stack.shape)
    throw Error("coefficient image shape does not match the predictor grid");
  Eigen::Map<const VectorXd> b(beta.data.data(),
                               static_cast<Index>(beta.data.size()));
  return stack.data * b;
}

double sample_variance(const VectorXd& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

void validate(const OutcomeSpec& spec) {
  if (!(spec.target_r2 >= 0.0) || !(spec.target_r2 < 1.0))
    throw Error("target r2 must lie in [0, 1)");
  if (spec.family == Family::binomial &&
      (!(spec.base_rate > 0.0) || !(spec.base_rate < 1.0)))
    throw Error("base rate must lie strictly inside (0, 1)");
  if (!(spec.sigma >= 0.0)) throw Error("sigma must be nonnegative");
}

}  // namespace

Grid make_beta1(const std::vector<int>& shape) {
  require_2d(shape, "make_beta1");
  Grid out(shape);
  const double norm = 1.0 / (20.0 * kPi);
  std::size_t at = 0;
  for (int r = 0; r < shape[0]; ++r) {
    const double s1 = r + 1.0;
    for (int c = 0; c < shape[1]; ++c, ++at) {
      const double s2 = c + 1.0;
      const double d1 = (s1 - 30.0) * (s1 - 30.0) + (s2 - 20.0) * (s2 - 20.0);
      const double d2 = (s1 - 20.0) * (s1 - 20.0) + (s2 - 55.0) * (s2 - 55.0);
      out.data[at] = norm * (std::exp(-d1 / 20.0) - std::exp(-d2 / 20.0));
    }
  }
  return out;
}

Grid make_beta2(const std::vector<int>& shape) {
  require_2d(shape, "make_beta2");
  Grid out(shape);
  const double side = shape[0];  // first axis sets the length scale
  std::size_t at = 0;
  for (int r = 0; r < shape[0]; ++r) {
    const double s1 = r + 1.0;
    for (int c = 0; c < shape[1]; ++c, ++at) {
      const double s2 = c + 1.0;
      double v = 0.0;
      for (int j = 0; j < kBumps; ++j) {
        const double c1 = shape[0] * kBumpT[j];
        const double c2 = shape[1] * kBumpT[kBumps - 1 - j];
        const double rr = std::hypot(s1 - c1, s2 - c2);
        const double base = 1.0 + rr / (side * kBumpW[j]);
        v += kBumpH[j] / (base * base * base * base);
      }
      out.data[at] = v;
    }
  }
  return out;
}

Grid make_block_image(const std::vector<int>& shape) {
  if (shape.empty()) throw Error("make_block_image needs a nonempty shape");
  const std::size_t d = shape.size();
  std::vector<int> side(d), start(d);
  for (std::size_t t = 0; t < d; ++t) {
    if (shape[t] < 4) throw Error("make_block_image needs every side >= 4");
    side[t] = shape[t] / 4;
    start[t] = (shape[t] - side[t]) / 2;
  }
  Grid out(shape);
  for (std::size_t lin = 0; lin < out.size(); ++lin) {
    std::size_t rem = lin;
    bool inside = true;
    for (std::size_t t = d; t-- > 0;) {
      const int coord = static_cast<int>(rem % static_cast<std::size_t>(shape[t]));
      rem /= static_cast<std::size_t>(shape[t]);
      if (coord < start[t] || coord >= start[t] + side[t]) inside = false;
    }
    out.data[lin] = inside ? 1.0 : 0.0;
  }
  return out;
}

ImageStack seed_images(const std::vector<int>& shape, int count,
                       std::uint64_t seed) {
  if (shape.empty() || count < 1)
    throw Error("seed_images needs a shape and a positive count");
  const int d = static_cast<int>(shape.size());
  const std::size_t voxels = shape_size(shape);

  // modes p in {0..5}^d minus the zero mode, last axis fastest
  std::vector<std::vector<int>> modes;
  std::vector<int> p(static_cast<std::size_t>(d), 0);
  for (;;) {
    int t = d - 1;
    while (t >= 0 && p[static_cast<std::size_t>(t)] == 5)
      p[static_cast<std::size_t>(t--)] = 0;
    if (t < 0) break;
    ++p[static_cast<std::size_t>(t)];
    modes.push_back(p);
  }

  MatrixXd basis(static_cast<Index>(modes.size()), static_cast<Index>(voxels));
  for (std::size_t m = 0; m < modes.size(); ++m) {
    int norm2 = 0;
    for (int t = 0; t < d; ++t) norm2 += modes[m][t] * modes[m][t];
    const double w = 1.0 / (1.0 + norm2);
    for (std::size_t lin = 0; lin < voxels; ++lin) {
      std::size_t rem = lin;
      double v = w;
      for (int t = d - 1; t >= 0; --t) {
        const std::size_t n_t = static_cast<std::size_t>(shape[t]);
        const double coord = static_cast<double>(rem % n_t);
        rem /= n_t;
        v *= std::cos(kPi * modes[m][t] * (coord + 0.5) / shape[t]);
      }
      basis(static_cast<Index>(m), static_cast<Index>(lin)) = v;
    }
  }

  Rng root(seed);
  ImageStack out;
  out.shape = shape;
  out.data.resize(count, static_cast<Index>(voxels));
  VectorXd z(static_cast<Index>(modes.size()));
  for (int i = 0; i < count; ++i) {
    Rng amp = root.stream("seed-image", static_cast<std::uint64_t>(i));
    for (Index m = 0; m < z.size(); ++m) z[m] = amp.normal();
    out.data.row(i) = z.transpose() * basis;
  }
  return out;
}

PredictorModel fit_predictor_model(const ImageStack& seeds, int n_components,
                                   int n_coefs, const WaveletSpec& spec) {
  const Index n = seeds.n();
  if (n < 2) throw Error("need at least two seed images");
  if (n_components < 1) throw Error("need at least one component");
  StackCoeffs sc = dwt_stack(seeds, spec);
  const Index p = sc.coeffs.cols();
  if (n_coefs < 1 || n_coefs > p)
    throw Error("n_coefs must lie in [1, " + std::to_string(p) + "]");

  MatrixXd Xc = sc.coeffs;
  Xc.rowwise() -= column_means(sc.coeffs).transpose();
  std::vector<Index> support = top_variance_columns(Xc, n_coefs);

  MatrixXd sub(n, static_cast<Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k)
    sub.col(static_cast<Index>(k)) = Xc.col(support[k]);

  Eigen::BDCSVD<MatrixXd> svd(sub, Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  const double tol =
      sv.size() == 0 ? 0.0
                     : sv[0] * std::numeric_limits<double>::epsilon() *
                           static_cast<double>(std::max(sub.rows(), sub.cols()));
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) ++rank;
  if (n_components > rank)
    throw Error("requested " + std::to_string(n_components) +
                " components but the screened seed matrix has rank " +
                std::to_string(rank));

  PredictorModel model;
  model.shape = seeds.shape;
  model.layout = sc.layout;
  model.support = std::move(support);
  model.loadings = svd.matrixV().leftCols(n_components);
  for (Index j = 0; j < model.loadings.cols(); ++j) {
    Index at = 0;
    model.loadings.col(j).cwiseAbs().maxCoeff(&at);
    if (model.loadings(at, j) < 0.0) model.loadings.col(j) *= -1.0;
  }
  model.variances = sv.head(n_components).array().square() /
                    static_cast<double>(n - 1);

  VectorXd var(p);
  for (Index j = 0; j < p; ++j)
    var[j] = Xc.col(j).squaredNorm() / static_cast<double>(n - 1);
  VectorXd sorted = var;
  std::sort(sorted.begin(), sorted.end());
  const double med = p % 2 == 1 ? sorted[p / 2]
                                : 0.5 * (sorted[p / 2 - 1] + sorted[p / 2]);
  double total = 0.0, kept = 0.0;
  for (Index j = 0; j < p; ++j) total += std::max(0.0, var[j] - med);
  for (Index k : model.support) kept += std::max(0.0, var[k] - med);
  // a stack with no above-median spread has nothing left to capture
  model.retained_excess = total > 0.0 ? kept / total : 1.0;
  return model;
}

Grid eigenimage(const PredictorModel& model, int j) {
  if (j < 0 || j >= model.loadings.cols())
    throw Error("component index out of range");
  VectorXd full = VectorXd::Zero(static_cast<Index>(model.layout.size));
  for (std::size_t k = 0; k < model.support.size(); ++k)
    full[model.support[k]] = model.loadings(static_cast<Index>(k), j);
  return idwt(full, model.layout);
}

ImageStack simulate_predictors(const PredictorModel& model, Index n,
                               std::uint64_t seed) {
  if (n < 1) throw Error("need at least one image");
  const Index J = model.variances.size();
  const Index voxels = static_cast<Index>(shape_size(model.shape));
  MatrixXd E(J, voxels);
  for (Index j = 0; j < J; ++j) {
    Grid img = eigenimage(model, static_cast<int>(j));
    E.row(j) = Eigen::Map<const VectorXd>(img.data.data(), voxels).transpose();
  }
  const VectorXd sd = model.variances.cwiseSqrt();
  Rng rng = Rng(seed).stream("predictor-scores");
  MatrixXd C(n, J);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < J; ++j) C(i, j) = rng.normal() * sd[j];
  ImageStack out;
  out.shape = model.shape;
  out.data = C * E;
  return out;
}

ScaledCoef scale_beta_for_r2(const Grid& beta, const ImageStack& predictors,
                             const OutcomeSpec& spec) {
  validate(spec);
  if (predictors.n() < 2) throw Error("need at least two predictor images");
  ScaledCoef out;
  out.beta = beta;
  if (spec.target_r2 == 0.0) {
    std::fill(out.beta.data.begin(), out.beta.data.end(), 0.0);
    out.scale = 0.0;
    out.delta0 =
        spec.family == Family::binomial ? logit(spec.base_rate) : 0.0;
    return out;
  }
  if (spec.family == Family::gaussian && spec.sigma == 0.0)
    throw Error("a positive r2 needs a positive sigma");

  const VectorXd s = image_scores(predictors, beta);
  const double v = sample_variance(s);
  if (!(v > 0.0))
    throw Error("image scores are constant; a positive r2 is unreachable");
  const double noise = spec.family == Family::gaussian
                           ? spec.sigma * spec.sigma
                           : kPi * kPi / 3.0;
  const double target = spec.target_r2 / (1.0 - spec.target_r2) * noise;
  out.scale = std::sqrt(target / v);
  for (double& val : out.beta.data) val *= out.scale;

  if (spec.family == Family::binomial) {
    const VectorXd ss = s * out.scale;
    auto rate = [&](double d0) {
      double acc = 0.0;
      for (Index i = 0; i < ss.size(); ++i) acc += logistic(d0 + ss[i]);
      return acc / static_cast<double>(ss.size());
    };
    double lo = -60.0, hi = 60.0;
    if (rate(lo) > spec.base_rate || rate(hi) < spec.base_rate)
      throw Error("base rate unreachable for these image scores");
    double mid = 0.0;
    for (int it = 0; it < 200; ++it) {
      mid = 0.5 * (lo + hi);
      const double r = rate(mid);
      if (std::abs(r - spec.base_rate) <= 1e-4) break;
      (r < spec.base_rate ? lo : hi) = mid;
    }
    out.delta0 = mid;
  }
  return out;
}

VectorXd simulate_outcomes(const ImageStack& predictors, const Grid& beta,
                           double delta0, const MatrixXd& T,
                           const VectorXd& delta, const OutcomeSpec& spec) {
  validate(spec);
  const Index n = predictors.n();
  if (T.size() != 0 && T.rows() != n)
    throw Error("covariate rows do not match the image count");
  if (T.cols() != delta.size())
    throw Error("delta length does not match the covariate count");
  VectorXd eta = image_scores(predictors, beta);
  if (T.size() != 0) eta += T * delta;

  Rng rng = Rng(spec.seed).stream("outcome");
  VectorXd y(n);
  if (spec.family == Family::gaussian) {
    for (Index i = 0; i < n; ++i) y[i] = eta[i] + spec.sigma * rng.normal();
  } else {
    for (Index i = 0; i < n; ++i)
      y[i] = rng.uniform() < logistic(delta0 + eta[i]) ? 1.0 : 0.0;
  }
  return y;
}

}  // namespace waveir
