#include "waveir/dataset.hpp"

#include "waveir/util.hpp"

namespace waveir {

void validate(const Dataset& data) {
  const Eigen::Index n = data.y.size();
  if (n < 1) throw Error("dataset is empty");
  if (data.T.rows() != n) throw Error("covariate rows do not match response length");
  if (data.T.cols() < 1) throw Error("covariate design must include an intercept");
  for (Eigen::Index i = 0; i < n; ++i)
    if (data.T(i, 0) != 1.0)
      throw Error("first covariate column must be the intercept (all ones)");
  if (data.images.n() != n) throw Error("image count does not match response length");
  if (static_cast<std::size_t>(data.images.voxels()) != shape_size(data.images.shape))
    throw Error("image stack shape does not match its column count");
  if (!data.images.mask.empty() &&
      data.images.mask.size() != static_cast<std::size_t>(data.images.voxels()))
    throw Error("mask length does not match voxel count");
  if (data.family == Family::binomial)
    for (Eigen::Index i = 0; i < n; ++i)
      if (data.y[i] != 0.0 && data.y[i] != 1.0)
        throw Error("binomial responses must be coded 0/1");
  if (!data.covariate_names.empty() &&
      data.covariate_names.size() != static_cast<std::size_t>(data.T.cols()) - 1)
    throw Error("covariate names must match non-intercept columns");
}

}  // namespace waveir
