#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

namespace waveir {

/// Dense d-dimensional array, d in {1,2,3}, row-major (last axis fastest).
struct Grid {
  std::vector<int> shape;
  std::vector<double> data;

  Grid() = default;
  explicit Grid(std::vector<int> shape_);

  int dims() const { return static_cast<int>(shape.size()); }
  std::size_t size() const { return data.size(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

std::size_t shape_size(const std::vector<int>& shape);

/// n images on a common grid; row i of `data` is image i flattened row-major.
/// `mask` is empty or one flag per voxel (nonzero = inside).
struct ImageStack {
  std::vector<int> shape;
  Eigen::MatrixXd data;
  std::vector<std::uint8_t> mask;

  Eigen::Index n() const { return data.rows(); }
  Eigen::Index voxels() const { return data.cols(); }
  Grid image(Eigen::Index i) const;
};

}  // namespace waveir
