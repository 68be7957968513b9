#include "waveir/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "waveir/util.hpp"
#include "waveir/wavelet.hpp"

namespace waveir {

namespace {

constexpr char kArrayMagic[8] = {'W', 'V', 'A', 'R', 'R', 'A', 'Y', '\0'};
constexpr std::uint32_t kArrayVersion = 1;
constexpr std::uint32_t kDtypeFloat64 = 1;

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kCovariatesFile = "covariates.csv";
constexpr const char* kImagesFile = "images.bin";
constexpr const char* kMaskFile = "mask.bin";
constexpr const char* kTruthBetaFile = "truth_beta.bin";

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

void need_bytes(std::istream& is, char* out, std::size_t count,
                const std::string& what) {
  is.read(out, static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(is.gcount()) != count)
    throw Error(what + ": truncated file");
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  char b[4];
  need_bytes(is, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is, const std::string& what) {
  char b[8];
  need_bytes(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

double get_f64(std::istream& is, const std::string& what) {
  std::uint64_t bits = get_u64(is, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

const nlohmann::json& need_field(const nlohmann::json& j, const char* field,
                                 const std::string& file) {
  auto it = j.find(field);
  if (it == j.end()) throw Error(file + ": missing field '" + field + "'");
  return *it;
}

template <typename T>
T field_as(const nlohmann::json& j, const char* field, const std::string& file) {
  try {
    return need_field(j, field, file).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(file + ": field '" + field + "': " + e.what());
  }
}

double parse_double(const std::string& token, const std::string& where) {
  double v = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw Error(where + ": value '" + token + "' is not numeric");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

void check_csv_safe(const std::string& name) {
  if (name.empty() || name.find_first_of(",\"\n\r") != std::string::npos)
    throw Error("covariate name '" + name + "' is not CSV-safe");
}

nlohmann::ordered_json wavelet_json(const WaveletSpec& spec) {
  return {{"family", family_name(spec.family)},
          {"vanishing_moments", spec.vanishing_moments},
          {"j0", spec.j0}};
}

WaveletSpec wavelet_from_json(const nlohmann::json& j, const std::string& file) {
  WaveletSpec spec;
  spec.family = family_from_name(field_as<std::string>(j, "family", file));
  spec.vanishing_moments = field_as<int>(j, "vanishing_moments", file);
  spec.j0 = field_as<int>(j, "j0", file);
  return spec;
}

// JSON numbers cannot carry inf or nan; those serialize as null.
nlohmann::ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

std::string two_sided_interval(double lo, double hi) {
  std::ostringstream os;
  os << "[" << std::setw(9) << lo << ", " << std::setw(9) << hi << "]";
  return os.str();
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(path.string() + ": write failed");
}

ArrayData read_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open");
  const std::string what = path.string();

  char magic[8];
  need_bytes(in, magic, 8, what);
  if (std::memcmp(magic, kArrayMagic, 8) != 0)
    throw Error(what + ": not an array file (bad magic)");
  std::uint32_t version = get_u32(in, what);
  if (version != kArrayVersion)
    throw Error(what + ": unsupported array file version " +
                std::to_string(version));
  std::uint32_t dtype = get_u32(in, what);
  if (dtype != kDtypeFloat64)
    throw Error(what + ": unsupported dtype code " + std::to_string(dtype));
  std::uint32_t ndim = get_u32(in, what);
  if (ndim < 1 || ndim > 8)
    throw Error(what + ": dimension count " + std::to_string(ndim) +
                " out of range");

  ArrayData array;
  std::uint64_t total = 1;
  for (std::uint32_t d = 0; d < ndim; ++d) {
    std::uint64_t extent = get_u64(in, what);
    if (extent == 0 || extent > (std::uint64_t(1) << 31))
      throw Error(what + ": extent " + std::to_string(extent) +
                  " out of range");
    total *= extent;
    if (total > (std::uint64_t(1) << 31))
      throw Error(what + ": array too large");
    array.shape.push_back(static_cast<int>(extent));
  }
  array.values.resize(static_cast<std::size_t>(total));
  for (double& v : array.values) v = get_f64(in, what);
  if (in.peek() != std::char_traits<char>::eof())
    throw Error(what + ": trailing bytes after payload");
  return array;
}

void write_array(const std::filesystem::path& path, const ArrayData& array) {
  if (array.shape.empty()) throw Error("array shape may not be empty");
  std::uint64_t total = 1;
  for (int extent : array.shape) {
    if (extent <= 0) throw Error("array extents must be positive");
    total *= static_cast<std::uint64_t>(extent);
  }
  if (array.values.size() != total)
    throw Error("array payload size does not match its shape");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out.write(kArrayMagic, 8);
  put_u32(out, kArrayVersion);
  put_u32(out, kDtypeFloat64);
  put_u32(out, static_cast<std::uint32_t>(array.shape.size()));
  for (int extent : array.shape) put_u64(out, static_cast<std::uint64_t>(extent));
  for (double v : array.values) put_f64(out, v);
  if (!out) throw Error(path.string() + ": write failed");
}

void write_bundle(const std::filesystem::path& dir, const Dataset& data,
                  const BundleTruth* truth) {
  validate(data);
  std::filesystem::create_directories(dir);

  const Eigen::Index n = data.n();
  const Eigen::Index q = data.T.cols() - 1;  // covariates past the intercept
  std::vector<std::string> names = data.covariate_names;
  if (static_cast<Eigen::Index>(names.size()) != q) {
    if (!names.empty())
      throw Error("covariate_names does not match the design width");
    for (Eigen::Index j = 0; j < q; ++j)
      names.push_back("t" + std::to_string(j + 1));
  }
  for (const std::string& name : names) check_csv_safe(name);

  std::string csv = "y";
  for (const std::string& name : names) csv += "," + name;
  csv += "\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    csv += format_double(data.y[i]);
    for (Eigen::Index j = 0; j < q; ++j)
      csv += "," + format_double(data.T(i, j + 1));
    csv += "\n";
  }
  write_text(dir / kCovariatesFile, csv);

  ArrayData images;
  images.shape.push_back(static_cast<int>(n));
  for (int extent : data.images.shape) images.shape.push_back(extent);
  images.values.reserve(static_cast<std::size_t>(n * data.images.voxels()));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index v = 0; v < data.images.voxels(); ++v)
      images.values.push_back(data.images.data(i, v));
  write_array(dir / kImagesFile, images);

  nlohmann::ordered_json manifest;
  manifest["version"] = 1;
  manifest["kind"] = "waveir-bundle";
  manifest["family"] = to_string(data.family);
  manifest["n"] = n;
  manifest["grid_shape"] = data.images.shape;
  manifest["response"] = "y";
  manifest["covariates"] = names;
  manifest["covariates_file"] = kCovariatesFile;
  manifest["images_file"] = kImagesFile;
  if (!data.images.mask.empty()) {
    ArrayData mask;
    mask.shape = data.images.shape;
    mask.values.assign(data.images.mask.begin(), data.images.mask.end());
    write_array(dir / kMaskFile, mask);
    manifest["mask_file"] = kMaskFile;
  }
  if (truth != nullptr) {
    ArrayData beta;
    beta.shape = truth->beta.shape;
    beta.values = truth->beta.data;
    write_array(dir / kTruthBetaFile, beta);
    nlohmann::ordered_json t = truth->config;
    t["delta0"] = truth->delta0;
    t["beta_file"] = kTruthBetaFile;
    manifest["truth"] = t;
  }
  write_text(dir / kManifestFile, manifest.dump(2) + "\n");
}

nlohmann::ordered_json read_manifest(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / kManifestFile;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open");
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

Dataset read_bundle(const std::filesystem::path& dir,
                    std::vector<std::string>* warnings) {
  const nlohmann::ordered_json manifest = read_manifest(dir);
  const std::string mf = (dir / kManifestFile).string();
  if (field_as<int>(manifest, "version", mf) != 1)
    throw Error(mf + ": unsupported bundle version");

  Dataset data;
  data.family = family_from_string(field_as<std::string>(manifest, "family", mf));
  const auto grid_shape = field_as<std::vector<int>>(manifest, "grid_shape", mf);
  const std::string response = field_as<std::string>(manifest, "response", mf);
  const auto covariates =
      field_as<std::vector<std::string>>(manifest, "covariates", mf);

  const auto images_file = field_as<std::string>(manifest, "images_file", mf);
  const ArrayData images = read_array(dir / images_file);
  const std::string imf = (dir / images_file).string();
  if (images.shape.size() != grid_shape.size() + 1)
    throw Error(imf + ": expected one stack axis plus " +
                std::to_string(grid_shape.size()) + " grid axes, found " +
                std::to_string(images.shape.size()));
  for (std::size_t d = 0; d < grid_shape.size(); ++d)
    if (images.shape[d + 1] != grid_shape[d])
      throw Error(imf + ": grid axis " + std::to_string(d) + " has extent " +
                  std::to_string(images.shape[d + 1]) +
                  " but the manifest grid_shape says " +
                  std::to_string(grid_shape[d]));
  const Eigen::Index n_images = images.shape[0];
  const Eigen::Index voxels = shape_size(grid_shape);

  const auto covariates_file =
      field_as<std::string>(manifest, "covariates_file", mf);
  const std::filesystem::path csv_path = dir / covariates_file;
  std::ifstream csv(csv_path, std::ios::binary);
  if (!csv) throw Error(csv_path.string() + ": cannot open");
  const std::string cf = csv_path.string();

  std::string line;
  if (!std::getline(csv, line)) throw Error(cf + ": empty file");
  const std::vector<std::string> header = split_csv_line(line);
  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw Error(cf + ": no column named '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t y_col = column_of(response);
  std::vector<std::size_t> t_cols;
  for (const std::string& name : covariates) t_cols.push_back(column_of(name));

  std::vector<std::vector<double>> rows;
  for (int row_no = 2; std::getline(csv, line); ++row_no) {
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error(cf + " row " + std::to_string(row_no) + ": expected " +
                  std::to_string(header.size()) + " fields, found " +
                  std::to_string(fields.size()));
    std::vector<double> parsed(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j)
      parsed[j] = parse_double(fields[j], cf + " row " + std::to_string(row_no) +
                                              ": column '" + header[j] + "'");
    rows.push_back(std::move(parsed));
  }
  const Eigen::Index n_rows = static_cast<Eigen::Index>(rows.size());
  if (n_rows != n_images)
    throw Error(covariates_file + " has " + std::to_string(n_rows) +
                " data rows but " + images_file + " holds " +
                std::to_string(n_images) + " images");

  data.y.resize(n_rows);
  for (Eigen::Index i = 0; i < n_rows; ++i) data.y[i] = rows[i][y_col];

  // The first covariate column doubles as the intercept when it is
  // identically 1; otherwise an intercept is prepended.
  bool first_is_intercept = !covariates.empty();
  if (first_is_intercept)
    for (Eigen::Index i = 0; i < n_rows; ++i)
      if (rows[i][t_cols[0]] != 1.0) {
        first_is_intercept = false;
        break;
      }
  const std::size_t skip = first_is_intercept ? 1 : 0;
  data.T.resize(n_rows, 1 + static_cast<Eigen::Index>(covariates.size() - skip));
  data.T.col(0).setOnes();
  for (std::size_t j = skip; j < covariates.size(); ++j) {
    const Eigen::Index col = 1 + static_cast<Eigen::Index>(j - skip);
    for (Eigen::Index i = 0; i < n_rows; ++i)
      data.T(i, col) = rows[i][t_cols[j]];
    data.covariate_names.push_back(covariates[j]);
  }

  if (warnings != nullptr)
    for (std::size_t j = skip; j < covariates.size(); ++j) {
      bool constant = n_rows > 0;
      for (Eigen::Index i = 1; i < n_rows && constant; ++i)
        constant = rows[i][t_cols[j]] == rows[0][t_cols[j]];
      if (constant)
        warnings->push_back("covariate '" + covariates[j] +
                            "' is constant across all rows");
    }

  data.images.shape = grid_shape;
  data.images.data.resize(n_images, voxels);
  for (Eigen::Index i = 0; i < n_images; ++i)
    for (Eigen::Index v = 0; v < voxels; ++v)
      data.images.data(i, v) = images.values[static_cast<std::size_t>(i * voxels + v)];

  if (manifest.contains("mask_file")) {
    const auto mask_file = field_as<std::string>(manifest, "mask_file", mf);
    const ArrayData mask = read_array(dir / mask_file);
    if (mask.shape != grid_shape)
      throw Error((dir / mask_file).string() +
                  ": mask shape does not match the manifest grid_shape");
    data.images.mask.resize(mask.values.size());
    for (std::size_t v = 0; v < mask.values.size(); ++v) {
      if (mask.values[v] != 0.0 && mask.values[v] != 1.0)
        throw Error((dir / mask_file).string() + ": mask values must be 0 or 1");
      data.images.mask[v] = mask.values[v] != 0.0 ? 1 : 0;
    }
  }

  validate(data);
  return data;
}

nlohmann::ordered_json config_json(const EstimatorConfig& cfg) {
  nlohmann::ordered_json j;
  j["method"] = to_string(cfg.method);
  j["domain"] = cfg.use_wavelet ? "wavelet" : "voxel";
  j["wavelet"] = wavelet_json(cfg.wavelet);
  j["keep"] = cfg.n_keep;
  j["components"] = cfg.n_components;
  j["alpha"] = cfg.alpha;
  j["lambda"] = cfg.lambda;
  return j;
}

EstimatorConfig config_from_json(const nlohmann::json& j) {
  const std::string file = "config";
  EstimatorConfig cfg;
  cfg.method = method_from_string(field_as<std::string>(j, "method", file));
  const std::string domain = field_as<std::string>(j, "domain", file);
  if (domain != "wavelet" && domain != "voxel")
    throw Error("config: unknown domain '" + domain + "'");
  cfg.use_wavelet = domain == "wavelet";
  cfg.wavelet = wavelet_from_json(need_field(j, "wavelet", file), file);
  cfg.n_keep = field_as<int>(j, "keep", file);
  cfg.n_components = field_as<int>(j, "components", file);
  cfg.alpha = field_as<double>(j, "alpha", file);
  cfg.lambda = field_as<double>(j, "lambda", file);
  return cfg;
}

void save_fit(const std::filesystem::path& path, const ImageModelFit& fit) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["kind"] = "scalar-on-image-fit";
  j["family"] = to_string(fit.family);
  j["config"] = config_json(fit.config);
  j["grid_shape"] = fit.grid_shape;
  if (fit.config.use_wavelet) j["layout"] = fit.layout.to_json();
  j["delta"] = std::vector<double>(fit.core.delta.begin(), fit.core.delta.end());
  nlohmann::ordered_json coefs = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < fit.core.support.size(); ++k) {
    const Eigen::Index col = fit.core.support[k];
    coefs.push_back({{"column", col},
                     {"beta", fit.core.beta[static_cast<Eigen::Index>(k)]},
                     {"center", fit.core.centers[col]}});
  }
  j["coefficients"] = coefs;
  j["deviance"] = json_number(fit.core.deviance);
  j["converged"] = fit.core.converged;
  j["iterations"] = fit.core.iterations;
  j["rank_deficient"] = fit.core.rank_deficient;
  write_text(path, j.dump(2) + "\n");
}

ImageModelFit load_fit(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open");
  const std::string file = path.string();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(file + ": " + e.what());
  }
  if (field_as<int>(j, "version", file) != 1)
    throw Error(file + ": unsupported fit file version");

  ImageModelFit fit;
  fit.family = family_from_string(field_as<std::string>(j, "family", file));
  try {
    fit.config = config_from_json(need_field(j, "config", file));
  } catch (const Error& e) {
    throw Error(file + ": " + e.what());
  }
  fit.grid_shape = field_as<std::vector<int>>(j, "grid_shape", file);

  Eigen::Index n_columns = 0;
  if (fit.config.use_wavelet) {
    try {
      fit.layout = CoeffLayout::from_json(need_field(j, "layout", file));
    } catch (const nlohmann::json::exception& e) {
      throw Error(file + ": layout: " + e.what());
    }
    if (fit.layout.original_shape != fit.grid_shape)
      throw Error(file + ": grid_shape does not match the transform layout");
    n_columns = static_cast<Eigen::Index>(fit.layout.size);
  } else {
    n_columns = shape_size(fit.grid_shape);
  }

  const auto delta = field_as<std::vector<double>>(j, "delta", file);
  fit.core.delta = Eigen::Map<const Eigen::VectorXd>(
      delta.data(), static_cast<Eigen::Index>(delta.size()));

  const nlohmann::json& coefs = need_field(j, "coefficients", file);
  if (!coefs.is_array()) throw Error(file + ": coefficients must be an array");
  fit.core.beta.resize(static_cast<Eigen::Index>(coefs.size()));
  fit.core.centers = Eigen::VectorXd::Zero(n_columns);
  Eigen::Index prev = -1;
  Eigen::Index k = 0;
  for (const nlohmann::json& entry : coefs) {
    const Eigen::Index col = field_as<Eigen::Index>(entry, "column", file);
    if (col <= prev)
      throw Error(file + ": coefficient columns must be strictly ascending");
    if (col >= n_columns)
      throw Error(file + ": coefficient column " + std::to_string(col) +
                  " is outside the design (" + std::to_string(n_columns) +
                  " columns)");
    fit.core.support.push_back(col);
    fit.core.beta[k] = field_as<double>(entry, "beta", file);
    fit.core.centers[col] = field_as<double>(entry, "center", file);
    prev = col;
    ++k;
  }

  if (j.contains("deviance") && !j["deviance"].is_null())
    fit.core.deviance = j["deviance"].get<double>();
  fit.core.converged = field_as<bool>(j, "converged", file);
  fit.core.iterations = field_as<int>(j, "iterations", file);
  fit.core.rank_deficient = field_as<bool>(j, "rank_deficient", file);

  const Eigen::VectorXd dense = dense_beta(fit.core, n_columns);
  if (fit.config.use_wavelet) {
    fit.beta_image = idwt(dense, fit.layout);
  } else {
    fit.beta_image = Grid(fit.grid_shape);
    for (Eigen::Index v = 0; v < n_columns; ++v)
      fit.beta_image.data[static_cast<std::size_t>(v)] = dense[v];
  }
  return fit;
}

nlohmann::ordered_json cv_result_json(const CVResult& result) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["kind"] = "cv-result";
  j["cv"] = {{"folds", result.cv.folds},
             {"repeats", result.cv.repeats},
             {"seed", result.cv.seed},
             {"loss", to_string(result.cv.loss)},
             {"aggregate", to_string(result.cv.aggregate)}};
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (const ConfigScore& row : result.table) {
    nlohmann::ordered_json entry;
    entry["config"] = config_json(row.config);
    entry["score"] = json_number(row.score);
    entry["failed_folds"] = row.failed_folds;
    nlohmann::ordered_json sums = nlohmann::ordered_json::array();
    for (double s : row.fold_sums) sums.push_back(json_number(s));
    entry["fold_sums"] = sums;
    table.push_back(entry);
  }
  j["table"] = table;
  j["best_index"] = result.best_index;
  j["one_se_index"] = result.one_se_index;
  j["best_config"] = config_json(result.table[result.best_index].config);
  return j;
}

std::string cv_result_csv(const CVResult& result) {
  std::string csv =
      "config,method,domain,j0,keep,components,alpha,lambda,repeat,fold,"
      "deviance\n";
  for (std::size_t c = 0; c < result.table.size(); ++c) {
    const ConfigScore& row = result.table[c];
    const EstimatorConfig& cfg = row.config;
    const std::string prefix =
        std::to_string(c) + "," + to_string(cfg.method) + "," +
        (cfg.use_wavelet ? "wavelet" : "voxel") + "," +
        std::to_string(cfg.wavelet.j0) + "," + std::to_string(cfg.n_keep) +
        "," + std::to_string(cfg.n_components) + "," +
        format_double(cfg.alpha) + "," + format_double(cfg.lambda);
    for (std::size_t s = 0; s < row.fold_sums.size(); ++s) {
      const int rep = static_cast<int>(s) / result.cv.folds;
      const int fold = static_cast<int>(s) % result.cv.folds;
      csv += prefix + "," + std::to_string(rep) + "," + std::to_string(fold) +
             "," + format_double(row.fold_sums[s]) + "\n";
    }
  }
  return csv;
}

nlohmann::ordered_json perm_result_json(const PermTestResult& result) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["kind"] = "permutation-test";
  j["scheme"] = {{"kind", to_string(result.scheme.kind)},
                 {"count", result.scheme.count},
                 {"seed", result.scheme.seed}};
  j["observed"] = json_number(result.observed);
  nlohmann::ordered_json nulls = nlohmann::ordered_json::array();
  for (double s : result.null_stats) nulls.push_back(json_number(s));
  j["null_stats"] = nulls;
  j["p_value"] = result.p_value;
  j["observed_best"] = config_json(result.observed_best);
  nlohmann::ordered_json best = nlohmann::ordered_json::array();
  for (const EstimatorConfig& cfg : result.null_best)
    best.push_back(config_json(cfg));
  j["null_best"] = best;
  return j;
}

std::string perm_result_text(const PermTestResult& result) {
  std::vector<double> sorted = result.null_stats;
  std::sort(sorted.begin(), sorted.end());
  int at_or_below = 0;
  for (double s : result.null_stats)
    if (s <= result.observed) ++at_or_below;

  std::ostringstream os;
  os << "permutation test: " << to_string(result.scheme.kind) << " scheme, B = "
     << result.scheme.count << ", seed = " << result.scheme.seed << "\n";
  os << "observed min CV deviance: " << format_double(result.observed) << "\n";
  if (!sorted.empty()) {
    const double median = sorted.size() % 2 == 1
                              ? sorted[sorted.size() / 2]
                              : 0.5 * (sorted[sorted.size() / 2 - 1] +
                                       sorted[sorted.size() / 2]);
    os << "null min CV deviance: min " << format_double(sorted.front())
       << ", median " << format_double(median) << ", max "
       << format_double(sorted.back()) << "\n";
  }
  os << "p-value: " << format_double(result.p_value) << " (" << at_or_below
     << " of " << result.null_stats.size()
     << " null statistics at or below the observed)\n";
  return os.str();
}

nlohmann::ordered_json confounder_json(const ConfounderReport& report) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["kind"] = "confounder-report";
  nlohmann::ordered_json model = nlohmann::ordered_json::array();
  for (const WaldRow& row : report.scalar_model)
    model.push_back({{"term", row.name},
                     {"estimate", json_number(row.estimate)},
                     {"se", json_number(row.se)},
                     {"ci_lo", json_number(row.lo)},
                     {"ci_hi", json_number(row.hi)},
                     {"p", json_number(row.p)}});
  j["scalar_model"] = model;
  j["scalar_deviance"] = json_number(report.scalar_deviance);
  j["scalar_converged"] = report.scalar_converged;
  nlohmann::ordered_json corr = nlohmann::ordered_json::array();
  for (const CorrRow& row : report.score_correlations)
    corr.push_back({{"covariate", row.name},
                    {"defined", row.defined},
                    {"r", json_number(row.r)},
                    {"ci_lo", json_number(row.lo)},
                    {"ci_hi", json_number(row.hi)},
                    {"p", json_number(row.p)}});
  j["score_correlations"] = corr;
  if (!report.local_overlap.empty()) {
    nlohmann::ordered_json overlap = nlohmann::ordered_json::array();
    for (double v : report.local_overlap) overlap.push_back(json_number(v));
    j["local_overlap"] = overlap;
    j["overlap_threshold"] = report.overlap_threshold;
  }
  return j;
}

std::string confounder_text(const ConfounderReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "scalar-covariate model (deviance "
     << format_double(report.scalar_deviance) << ", "
     << (report.scalar_converged ? "converged" : "did not converge") << ")\n";
  std::size_t name_w = 4;
  for (const WaldRow& row : report.scalar_model)
    name_w = std::max(name_w, row.name.size());
  for (const CorrRow& row : report.score_correlations)
    name_w = std::max(name_w, row.name.size());
  os << "  " << std::left << std::setw(static_cast<int>(name_w)) << "term"
     << std::right << std::setw(12) << "estimate" << std::setw(12) << "se"
     << std::setw(24) << "95% CI" << std::setw(12) << "p" << "\n";
  for (const WaldRow& row : report.scalar_model)
    os << "  " << std::left << std::setw(static_cast<int>(name_w)) << row.name
       << std::right << std::setw(12) << row.estimate << std::setw(12)
       << row.se << std::setw(24) << two_sided_interval(row.lo, row.hi)
       << std::setw(12) << row.p << "\n";
  os << "\nscore correlations with the images-only linear predictor\n";
  os << "  " << std::left << std::setw(static_cast<int>(name_w)) << "covariate"
     << std::right << std::setw(12) << "r" << std::setw(24) << "95% CI"
     << std::setw(12) << "p" << "\n";
  for (const CorrRow& row : report.score_correlations) {
    os << "  " << std::left << std::setw(static_cast<int>(name_w)) << row.name
       << std::right;
    if (row.defined)
      os << std::setw(12) << row.r << std::setw(24)
         << two_sided_interval(row.lo, row.hi) << std::setw(12) << row.p
         << "\n";
    else
      os << std::setw(12) << "undefined"
         << "  (one side is constant)\n";
  }
  if (!report.local_overlap.empty()) {
    os << "\nsupport overlap (|corr| > "
       << format_double(report.overlap_threshold) << ")\n";
    for (std::size_t jx = 0; jx < report.local_overlap.size(); ++jx) {
      const std::string name = jx < report.score_correlations.size()
                                   ? report.score_correlations[jx].name
                                   : "t" + std::to_string(jx + 1);
      os << "  " << std::left << std::setw(static_cast<int>(name_w)) << name
         << std::right << std::setw(12) << report.local_overlap[jx] << "\n";
    }
  }
  return os.str();
}

}  // namespace waveir
