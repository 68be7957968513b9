#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "waveir/grid.hpp"

namespace waveir {

enum class WaveletFamily { daub_least_asymmetric, haar };

std::string family_name(WaveletFamily f);
WaveletFamily family_from_name(const std::string& name);

/// Orthonormal wavelet basis selection. Boundary handling is periodic
/// (circular); that is the only mode implemented, and it keeps the transform
/// exactly orthonormal at every dyadic length, including lengths shorter than
/// the filter.
struct WaveletSpec {
  WaveletFamily family = WaveletFamily::daub_least_asymmetric;
  int vanishing_moments = 10;
  int j0 = 4;  // coarsest retained level; depth per axis is log2(side) - j0

  bool operator==(const WaveletSpec&) const = default;
};

/// Scaling (lowpass) filter taps. The least-asymmetric family is
/// provided at 10 vanishing moments only; haar is mainly an oracle for tests.
const std::vector<double>& scaling_filter(const WaveletSpec& spec);

/// One contiguous subband in the packed coefficient vector. `orientation` has
/// one character per axis in row-major axis order: 'H' if that axis was
/// highpass-filtered at this level, 'L' otherwise. The all-'L' block holds the
/// scaling coefficients.
struct SubbandBlock {
  int level = 0;
  std::string orientation;
  std::size_t offset = 0;
  std::size_t length = 0;
  std::vector<int> extents;  // box extents per axis, product == length

  bool operator==(const SubbandBlock&) const = default;
};

/// Packed layout of a multilevel decomposition: scaling block first, then
/// detail levels from coarsest to finest. Padding is centered zero padding to
/// the next power of 2 per axis, with the extra cell trailing when the total
/// is odd.
struct CoeffLayout {
  std::vector<int> original_shape;
  std::vector<int> padded_shape;
  std::vector<int> pad_before;
  int levels = 0;
  WaveletSpec spec;
  std::vector<SubbandBlock> blocks;
  std::size_t size = 0;

  bool operator==(const CoeffLayout&) const = default;

  nlohmann::ordered_json to_json() const;
  static CoeffLayout from_json(const nlohmann::json& j);
};

CoeffLayout make_layout(const std::vector<int>& original_shape,
                        const WaveletSpec& spec);

struct PadRecord {
  std::vector<int> original_shape;
  std::vector<int> padded_shape;
  std::vector<int> before;  // leading zero cells per axis; trailing gets the rest
};

/// Zero-pads each axis to the next power of 2, content centered (odd leftover
/// cell trails). A power-of-2 grid passes through unchanged.
Grid pad_to_pow2(const Grid& image, PadRecord* record = nullptr);
Grid unpad(const Grid& padded, const PadRecord& record);

struct WaveletCoeffs {
  Eigen::VectorXd values;
  CoeffLayout layout;
};

/// Pads `image` per the layout, then analyzes. The grid shape must equal the
/// layout's original shape.
WaveletCoeffs dwt(const Grid& image, const CoeffLayout& layout);
WaveletCoeffs dwt(const Grid& image, const WaveletSpec& spec);

/// Exact inverse: synthesizes on the padded grid, then crops the centered
/// original region.
Grid idwt(const WaveletCoeffs& coeffs);
Grid idwt(const Eigen::VectorXd& values, const CoeffLayout& layout);

/// Analyzes every image in the stack against one shared layout; row i of the
/// result holds the packed coefficients of image i. Out-of-mask voxels are
/// zeroed before the transform.
struct StackCoeffs {
  Eigen::MatrixXd coeffs;
  CoeffLayout layout;
};
StackCoeffs dwt_stack(const ImageStack& stack, const WaveletSpec& spec);

}  // namespace waveir
