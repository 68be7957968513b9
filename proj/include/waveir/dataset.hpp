#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "waveir/glm.hpp"
#include "waveir/grid.hpp"

namespace waveir {

/// One analysis-ready sample: scalar response, confounder design (first
/// column all ones), and an image per row. Row i of every piece refers to the
/// same subject.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd T;
  ImageStack images;
  Family family = Family::gaussian;
  std::vector<std::string> covariate_names;  // optional, excludes intercept

  Eigen::Index n() const { return y.size(); }
};

/// Throws unless sizes line up and T carries a leading intercept column.
void validate(const Dataset& data);

}  // namespace waveir
