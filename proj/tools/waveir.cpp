#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "waveir/dataset.hpp"
#include "waveir/estimators.hpp"
#include "waveir/inference.hpp"
#include "waveir/io.hpp"
#include "waveir/modelsel.hpp"
#include "waveir/rng.hpp"
#include "waveir/simulate.hpp"
#include "waveir/util.hpp"
#include "waveir/wavelet.hpp"

namespace fs = std::filesystem;
using namespace waveir;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double parse_num(const std::string& token, const std::string& flag) {
  double v = 0.0;
  const char* end = token.data() + token.size();
  auto res = std::from_chars(token.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw UsageError(flag + ": '" + token + "' is not a number");
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<double> parse_num_list(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  for (const std::string& tok : split_list(s)) out.push_back(parse_num(tok, flag));
  return out;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& flag) {
  std::vector<int> out;
  for (double v : parse_num_list(s, flag)) {
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
      throw UsageError(flag + ": expected integers");
    out.push_back(i);
  }
  return out;
}

void report_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
}

Dataset load_bundle(const std::string& path) {
  std::vector<std::string> warnings;
  Dataset data = read_bundle(path, &warnings);
  report_warnings(warnings);
  return data;
}

// ---- simulate -------------------------------------------------------------

struct SimulateOpts {
  std::string design = "beta1";
  int n = 200;
  int grid = 32;
  std::string family = "gaussian";
  double r2 = 0.1;
  double base_rate = 0.5;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  int j0 = 4;
  int seeds = 33;
  int components = 32;
  int coefs = 0;  // 0 resolves to min(492, transform size)
  double covariate_effect = 0.0;
  bool with_covariate = false;
  std::string out = "bundle";
};

int run_simulate(const SimulateOpts& o) {
  const std::vector<int> shape = {o.grid, o.grid};
  Grid beta(shape);
  if (o.design == "beta1")
    beta = make_beta1(shape);
  else if (o.design == "beta2")
    beta = make_beta2(shape);
  else if (o.design == "block")
    beta = make_block_image(shape);
  else
    throw UsageError("--design must be beta1, beta2, or block");

  WaveletSpec spec;
  spec.j0 = o.j0;
  const CoeffLayout layout = make_layout(shape, spec);
  const int coefs =
      o.coefs > 0 ? o.coefs
                  : std::min(492, static_cast<int>(layout.size));

  const ImageStack seeds = seed_images(shape, o.seeds, o.seed);
  const PredictorModel model = fit_predictor_model(seeds, o.components, coefs, spec);
  const ImageStack predictors = simulate_predictors(model, o.n, o.seed);

  Eigen::MatrixXd T(o.n, o.with_covariate ? 2 : 1);
  T.col(0).setOnes();
  std::vector<std::string> names;
  if (o.with_covariate) {
    Rng cov = Rng(o.seed).stream("covariate");
    for (int i = 0; i < o.n; ++i) T(i, 1) = cov.normal();
    names.push_back("t1");
  }

  OutcomeSpec ospec;
  ospec.family = family_from_string(o.family);
  ospec.target_r2 = o.r2;
  ospec.base_rate = o.base_rate;
  ospec.sigma = o.sigma;
  ospec.seed = o.seed;
  const ScaledCoef scaled = scale_beta_for_r2(beta, predictors, ospec);

  Eigen::VectorXd delta = Eigen::VectorXd::Zero(T.cols());
  if (o.with_covariate) delta[1] = o.covariate_effect;

  Dataset data;
  data.y = simulate_outcomes(predictors, scaled.beta, scaled.delta0, T, delta, ospec);
  data.T = T;
  data.images = predictors;
  data.family = ospec.family;
  data.covariate_names = names;

  BundleTruth truth;
  truth.beta = scaled.beta;
  truth.delta0 = scaled.delta0;
  truth.config = {{"design", o.design},
                  {"n", o.n},
                  {"grid", o.grid},
                  {"family", o.family},
                  {"r2", o.r2},
                  {"base_rate", o.base_rate},
                  {"sigma", o.sigma},
                  {"seed", o.seed},
                  {"j0", o.j0},
                  {"seeds", o.seeds},
                  {"components", o.components},
                  {"coefs", coefs},
                  {"scale", scaled.scale}};
  if (o.with_covariate) truth.config["covariate_effect"] = o.covariate_effect;

  write_bundle(o.out, data, &truth);
  std::cout << "wrote bundle to " << o.out << " (n=" << o.n << ", grid="
            << o.grid << "x" << o.grid << ", family=" << o.family << ")\n";
  return 0;
}

// ---- shared tuning flags --------------------------------------------------

struct TuneOpts {
  std::string bundle;
  std::string method = "pcr";
  std::string domain = "wavelet";
  int j0 = 4;
  std::string c;       // comma list (cv/permtest) or single int (fit)
  std::string m;       // likewise
  std::string alpha;   // comma list or single float
  std::string lambda;  // "auto" or numbers
  int n_lambda = 100;
  double lambda_min_ratio = 1e-3;
  int folds = 5;
  int reps = 5;
  std::string aggregate = "mean";
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = ".";
};

void add_tuning_flags(CLI::App* cmd, TuneOpts& o, bool lists) {
  cmd->add_option("--bundle", o.bundle, "dataset bundle directory")->required();
  cmd->add_option("--method", o.method, "pcr, pls, or net");
  cmd->add_option("--domain", o.domain, "wavelet or voxel design");
  cmd->add_option("--j0", o.j0, "coarsest wavelet level");
  cmd->add_option("--c", o.c,
                  lists ? "screened coordinate counts, comma separated"
                        : "screened coordinate count (pcr/pls)");
  cmd->add_option("--m", o.m,
                  lists ? "component counts, comma separated"
                        : "component count (pcr/pls)");
  cmd->add_option("--alpha", o.alpha,
                  lists ? "net mixing values, comma separated"
                        : "net mixing parameter");
  cmd->add_option("--lambda", o.lambda,
                  lists ? "auto for a data-driven path, or comma-separated values"
                        : "net penalty strength");
  cmd->add_option("--out", o.out, "output directory");
}

void add_cv_flags(CLI::App* cmd, TuneOpts& o) {
  cmd->add_option("--n-lambda", o.n_lambda, "path length for --lambda auto");
  cmd->add_option("--lambda-min-ratio", o.lambda_min_ratio,
                  "smallest lambda as a share of lambda_max");
  cmd->add_option("--folds", o.folds, "cross-validation folds");
  cmd->add_option("--reps", o.reps, "cross-validation repetitions");
  cmd->add_option("--cv-aggregate", o.aggregate, "mean or median");
  cmd->add_option("--seed", o.seed, "seed for folds and permutations");
  cmd->add_option("--threads", o.threads, "worker threads");
}

Method checked_method(const TuneOpts& o, const CLI::App* cmd) {
  Method method;
  try {
    method = method_from_string(o.method);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const bool has_c = cmd->count("--c") > 0;
  const bool has_m = cmd->count("--m") > 0;
  const bool has_alpha = cmd->count("--alpha") > 0;
  const bool has_lambda = cmd->count("--lambda") > 0;
  if (method == Method::net) {
    if (has_c || has_m)
      throw UsageError("--c/--m apply to pcr and pls, not net");
  } else {
    if (has_alpha || has_lambda)
      throw UsageError("--alpha/--lambda apply to net, not " + o.method);
  }
  return method;
}

bool checked_domain(const std::string& domain) {
  if (domain == "wavelet") return true;
  if (domain == "voxel") return false;
  throw UsageError("--domain must be wavelet or voxel");
}

// ---- fit ------------------------------------------------------------------

int run_fit(const TuneOpts& o, const CLI::App* cmd) {
  const Method method = checked_method(o, cmd);
  EstimatorConfig cfg;
  cfg.method = method;
  cfg.use_wavelet = checked_domain(o.domain);
  cfg.wavelet.j0 = o.j0;
  if (method == Method::net) {
    if (cmd->count("--alpha") == 0 || cmd->count("--lambda") == 0)
      throw UsageError("fit with net needs --alpha and a numeric --lambda");
    cfg.alpha = parse_num(o.alpha, "--alpha");
    if (o.lambda == "auto")
      throw UsageError("fit needs a numeric --lambda, not auto");
    cfg.lambda = parse_num(o.lambda, "--lambda");
  } else {
    if (cmd->count("--c") == 0 || cmd->count("--m") == 0)
      throw UsageError("fit with " + o.method + " needs --c and --m");
    const auto cs = parse_int_list(o.c, "--c");
    const auto ms = parse_int_list(o.m, "--m");
    if (cs.size() != 1 || ms.size() != 1)
      throw UsageError("fit takes a single --c and --m; use cv for a grid");
    cfg.n_keep = cs[0];
    cfg.n_components = ms[0];
  }

  const Dataset data = load_bundle(o.bundle);
  const ImageModelFit fit = fit_image_model(data, cfg);

  fs::create_directories(o.out);
  save_fit(fs::path(o.out) / "fit.json", fit);
  ArrayData beta;
  beta.shape = fit.beta_image.shape;
  beta.values = fit.beta_image.data;
  write_array(fs::path(o.out) / "beta.bin", beta);
  std::cout << "fit: " << to_string(cfg.method) << " on "
            << (cfg.use_wavelet ? "wavelet" : "voxel") << " design, deviance "
            << format_double(fit.core.deviance) << ", "
            << fit.core.support.size() << " active coordinates\n"
            << "wrote " << (fs::path(o.out) / "fit.json").string() << " and "
            << (fs::path(o.out) / "beta.bin").string() << "\n";
  return 0;
}

// ---- cv -------------------------------------------------------------------

CVConfig make_cv_config(const TuneOpts& o) {
  CVConfig cv;
  cv.folds = o.folds;
  cv.repeats = o.reps;
  cv.seed = o.seed;
  try {
    cv.aggregate = aggregate_from_string(o.aggregate);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  cv.threads = o.threads;
  return cv;
}

GridRecipe make_recipe(const TuneOpts& o, Method method, bool use_wavelet,
                       const CLI::App* cmd) {
  GridRecipe recipe;
  recipe.method = method;
  recipe.use_wavelet = use_wavelet;
  recipe.wavelet.j0 = o.j0;
  recipe.n_lambda = o.n_lambda;
  recipe.lambda_min_ratio = o.lambda_min_ratio;
  if (method == Method::net) {
    if (cmd->count("--alpha") > 0)
      recipe.alphas = parse_num_list(o.alpha, "--alpha");
  } else {
    if (cmd->count("--c") == 0 || cmd->count("--m") == 0)
      throw UsageError(o.method + " tuning needs --c and --m lists");
    recipe.keeps = parse_int_list(o.c, "--c");
    recipe.components = parse_int_list(o.m, "--m");
  }
  return recipe;
}

int run_cv(const TuneOpts& o, const CLI::App* cmd) {
  const Method method = checked_method(o, cmd);
  const bool use_wavelet = checked_domain(o.domain);
  const CVConfig cv = make_cv_config(o);
  const Dataset data = load_bundle(o.bundle);

  CVResult result;
  const bool explicit_lambdas =
      method == Method::net && cmd->count("--lambda") > 0 && o.lambda != "auto";
  if (explicit_lambdas) {
    const std::vector<double> lambdas = parse_num_list(o.lambda, "--lambda");
    std::vector<double> alphas = {1.0};
    if (cmd->count("--alpha") > 0) alphas = parse_num_list(o.alpha, "--alpha");
    WaveletSpec spec;
    spec.j0 = o.j0;
    std::vector<EstimatorConfig> grid;
    for (double alpha : alphas)
      for (double lambda : lambdas) {
        EstimatorConfig cfg;
        cfg.method = Method::net;
        cfg.use_wavelet = use_wavelet;
        cfg.wavelet = spec;
        cfg.alpha = alpha;
        cfg.lambda = lambda;
        grid.push_back(cfg);
      }
    const Eigen::MatrixXd X = design_columns(data.images, use_wavelet, spec);
    result = tune(X, data.T, data.y, data.family, grid, cv);
  } else {
    const GridRecipe recipe = make_recipe(o, method, use_wavelet, cmd);
    result = tune_dataset(data, recipe, cv);
  }

  fs::create_directories(o.out);
  write_text(fs::path(o.out) / "cv.json", cv_result_json(result).dump(2) + "\n");
  write_text(fs::path(o.out) / "cv.csv", cv_result_csv(result));

  const EstimatorConfig best = result.table[result.best_index].config;
  const ImageModelFit fit = fit_image_model(data, best);
  save_fit(fs::path(o.out) / "fit.json", fit);
  ArrayData beta;
  beta.shape = fit.beta_image.shape;
  beta.values = fit.beta_image.data;
  write_array(fs::path(o.out) / "beta.bin", beta);

  std::cout << "cv: " << result.table.size() << " configurations, best "
            << config_json(best).dump() << " with score "
            << format_double(result.table[result.best_index].score) << "\n"
            << "wrote cv.json, cv.csv, fit.json, beta.bin under " << o.out
            << "\n";
  return 0;
}

// ---- permtest -------------------------------------------------------------

int run_permtest(const TuneOpts& o, const CLI::App* cmd,
                 const std::string& scheme_name, int B, bool allow_response) {
  const Method method = checked_method(o, cmd);
  const bool use_wavelet = checked_domain(o.domain);
  if (cmd->count("--lambda") > 0 && o.lambda != "auto")
    throw UsageError("permtest rebuilds its lambda path per run; only --lambda auto is accepted");
  const CVConfig cv = make_cv_config(o);
  const GridRecipe recipe = make_recipe(o, method, use_wavelet, cmd);

  PermutationScheme scheme;
  try {
    scheme.kind = perm_kind_from_string(scheme_name);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  scheme.count = B;
  scheme.seed = o.seed;
  scheme.allow_response_with_covariates = allow_response;

  const Dataset data = load_bundle(o.bundle);
  const PermTestResult result = perm_test(data, recipe, cv, scheme);

  nlohmann::ordered_json j = perm_result_json(result);
  j["cv"] = {{"folds", cv.folds},
             {"repeats", cv.repeats},
             {"seed", cv.seed},
             {"loss", to_string(cv.loss)},
             {"aggregate", to_string(cv.aggregate)}};
  fs::create_directories(o.out);
  write_text(fs::path(o.out) / "permtest.json", j.dump(2) + "\n");
  write_text(fs::path(o.out) / "permtest.txt", perm_result_text(result));
  std::cout << perm_result_text(result) << "wrote permtest.json and permtest.txt under "
            << o.out << "\n";
  return 0;
}

// ---- diagnose -------------------------------------------------------------

int run_diagnose(const std::string& bundle, const std::string& fit_path,
                 bool local_overlap, double threshold, const std::string& out) {
  const Dataset data = load_bundle(bundle);
  ImageModelFit fit = load_fit(fit_path);
  if (fit.core.delta.size() != 1) {
    // the diagnostic needs the image score with covariates excluded, so a
    // covariate-adjusted fit is redone images-only under the same config
    std::cerr << "note: refitting images-only (the stored fit was adjusted for "
              << fit.core.delta.size() - 1 << " covariates)\n";
    Dataset images_only = data;
    images_only.T = data.T.col(0);
    images_only.covariate_names.clear();
    fit = fit_image_model(images_only, fit.config);
  }
  const ConfounderReport report =
      confounder_diagnostics(data, fit, local_overlap, threshold);
  fs::create_directories(out);
  write_text(fs::path(out) / "diagnose.json", confounder_json(report).dump(2) + "\n");
  const std::string text = confounder_text(report);
  write_text(fs::path(out) / "diagnose.txt", text);
  std::cout << text << "wrote diagnose.json and diagnose.txt under " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wavelet-domain scalar-on-image regression toolkit"};
  app.require_subcommand(1);

  SimulateOpts sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset bundle");
  sim_cmd->add_option("--design", sim.design, "beta1, beta2, or block coefficient image");
  sim_cmd->add_option("--n", sim.n, "number of observations");
  sim_cmd->add_option("--grid", sim.grid, "square grid side length");
  sim_cmd->add_option("--family", sim.family, "gaussian or binomial");
  sim_cmd->add_option("--r2", sim.r2, "target variance-explained ratio");
  sim_cmd->add_option("--base-rate", sim.base_rate, "binomial marginal event rate");
  sim_cmd->add_option("--sigma", sim.sigma, "gaussian noise standard deviation");
  sim_cmd->add_option("--seed", sim.seed, "master seed");
  sim_cmd->add_option("--j0", sim.j0, "coarsest wavelet level of the predictor model");
  sim_cmd->add_option("--seeds", sim.seeds, "seed images behind the predictor law");
  sim_cmd->add_option("--components", sim.components, "predictor components");
  sim_cmd->add_option("--coefs", sim.coefs, "screened coefficients (0 = min(492, size))");
  CLI::Option* cov_opt = sim_cmd->add_option("--covariate-effect", sim.covariate_effect,
                                             "add a scalar covariate with this coefficient");
  sim_cmd->add_option("--out", sim.out, "bundle directory");

  TuneOpts fit_o;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit one configuration to a bundle");
  add_tuning_flags(fit_cmd, fit_o, false);

  TuneOpts cv_o;
  CLI::App* cv_cmd = app.add_subcommand("cv", "cross-validated model selection");
  add_tuning_flags(cv_cmd, cv_o, true);
  add_cv_flags(cv_cmd, cv_o);

  TuneOpts pt_o;
  std::string scheme = "pseudo";
  int B = 99;
  bool allow_response = false;
  CLI::App* pt_cmd = app.add_subcommand("permtest", "permutation test of the image effect");
  add_tuning_flags(pt_cmd, pt_o, true);
  add_cv_flags(pt_cmd, pt_o);
  pt_cmd->add_option("--scheme", scheme, "response or pseudo permutations");
  pt_cmd->add_option("--B", B, "number of permutations");
  pt_cmd->add_flag("--allow-response-with-covariates", allow_response,
                   "permit response permutations despite scalar covariates");

  std::string dg_bundle, dg_fit, dg_out = ".";
  bool dg_overlap = false;
  double dg_threshold = 0.3;
  CLI::App* dg_cmd = app.add_subcommand("diagnose", "confounding diagnostics for a fit");
  dg_cmd->add_option("--bundle", dg_bundle, "dataset bundle directory")->required();
  dg_cmd->add_option("--fit", dg_fit, "fit.json produced by fit or cv")->required();
  dg_cmd->add_flag("--local-overlap", dg_overlap,
                   "also report support-local correlation overlap");
  dg_cmd->add_option("--overlap-threshold", dg_threshold,
                     "|correlation| cutoff for the overlap share");
  dg_cmd->add_option("--out", dg_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim_cmd->parsed()) {
      sim.with_covariate = cov_opt->count() > 0;
      return run_simulate(sim);
    }
    if (fit_cmd->parsed()) return run_fit(fit_o, fit_cmd);
    if (cv_cmd->parsed()) return run_cv(cv_o, cv_cmd);
    if (pt_cmd->parsed()) return run_permtest(pt_o, pt_cmd, scheme, B, allow_response);
    if (dg_cmd->parsed())
      return run_diagnose(dg_bundle, dg_fit, dg_overlap, dg_threshold, dg_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
