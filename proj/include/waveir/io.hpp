#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "waveir/dataset.hpp"
#include "waveir/estimators.hpp"
#include "waveir/inference.hpp"
#include "waveir/modelsel.hpp"

namespace waveir {

/// Row-major float64 array with explicit little-endian framing:
/// magic "WVARRAY\0", u32 version = 1, u32 dtype = 1 (float64), u32 ndim,
/// ndim x u64 extents, payload. Round trips are bit-exact on any platform.
struct ArrayData {
  std::vector<int> shape;
  std::vector<double> values;
};

ArrayData read_array(const std::filesystem::path& path);
void write_array(const std::filesystem::path& path, const ArrayData& array);

/// Generating truth stored with a simulated bundle: the scaled true
/// coefficient image, the binomial intercept, and an echo of every resolved
/// generation setting.
struct BundleTruth {
  Grid beta;
  double delta0 = 0.0;
  nlohmann::ordered_json config;
};

/// Writes a dataset bundle directory: manifest.json, covariates.csv (response
/// column first), images.bin, optional mask.bin and truth_beta.bin. Covariate
/// names must be CSV-safe (no comma, quote, or newline).
void write_bundle(const std::filesystem::path& dir, const Dataset& data,
                  const BundleTruth* truth = nullptr);

/// Reads a bundle back. An intercept column is prepended unless the first
/// covariate column is identically 1, in which case that column is taken as
/// the intercept. Constant covariate columns are accepted with a warning
/// appended to `warnings`. Inconsistencies raise errors naming the file and
/// field involved.
Dataset read_bundle(const std::filesystem::path& dir,
                    std::vector<std::string>* warnings = nullptr);

nlohmann::ordered_json read_manifest(const std::filesystem::path& dir);

nlohmann::ordered_json config_json(const EstimatorConfig& cfg);
EstimatorConfig config_from_json(const nlohmann::json& j);

/// Persists a fit as JSON: family, config, grid shape, transform layout,
/// delta, and exactly one (column, beta, center) triple per support entry.
/// Loading rebuilds the coefficient image and everything predict() needs;
/// in-sample artifacts (fitted values, loadings) are not persisted.
void save_fit(const std::filesystem::path& path, const ImageModelFit& fit);
ImageModelFit load_fit(const std::filesystem::path& path);

nlohmann::ordered_json cv_result_json(const CVResult& result);
/// One row per (config, repetition, fold) with the fold deviance sum.
std::string cv_result_csv(const CVResult& result);

nlohmann::ordered_json perm_result_json(const PermTestResult& result);
std::string perm_result_text(const PermTestResult& result);

nlohmann::ordered_json confounder_json(const ConfounderReport& report);
std::string confounder_text(const ConfounderReport& report);

/// Shortest decimal form that parses back to the same double; "inf"/"nan"
/// spellings for non-finite values.
std::string format_double(double v);

void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace waveir
