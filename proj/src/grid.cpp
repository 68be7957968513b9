#include "waveir/grid.hpp"

#include "waveir/util.hpp"

namespace waveir {

std::size_t shape_size(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 3)
    throw Error("grid shape must have 1 to 3 dimensions");
  std::size_t n = 1;
  for (int s : shape) {
    if (s < 1) throw Error("grid dimensions must be positive");
    n *= static_cast<std::size_t>(s);
  }
  return n;
}

Grid::Grid(std::vector<int> shape_) : shape(std::move(shape_)) {
  data.assign(shape_size(shape), 0.0);
}

Grid ImageStack::image(Eigen::Index i) const {
  Grid g(shape);
  if (g.size() != static_cast<std::size_t>(data.cols()))
    throw Error("image stack shape does not match column count");
  for (Eigen::Index v = 0; v < data.cols(); ++v)
    g.data[static_cast<std::size_t>(v)] = data(i, v);
  return g;
}

}  // namespace waveir
