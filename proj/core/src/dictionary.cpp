#include "age/dictionary.hpp"

#include <cmath>

#include "age/error.hpp"
#include "age/linalg.hpp"
#include "age/random.hpp"

namespace age {

LayerGrouping::LayerGrouping(std::vector<std::pair<std::size_t, std::size_t>> ranges,
                             std::size_t layers)
    : ranges_(std::move(ranges)), layers_(layers) {
  std::size_t expected = 0;
  for (const auto& [begin, end] : ranges_) {
    if (begin != expected || end <= begin) {
      throw ConfigError("layer groups must be contiguous, non-empty and start at 0");
    }
    expected = end;
  }
  if (expected != layers || ranges_.empty()) {
    throw ConfigError("layer groups must cover all " + std::to_string(layers) + " layers");
  }
}

LayerGrouping LayerGrouping::per_layer(std::size_t layers) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t l = 0; l < layers; ++l) ranges.emplace_back(l, l + 1);
  return LayerGrouping(std::move(ranges), layers);
}

LayerGrouping LayerGrouping::stylegan18() {
  return LayerGrouping({{0, 3}, {3, 7}, {7, 18}}, 18);
}

std::size_t LayerGrouping::group_of(std::size_t layer) const {
  for (std::size_t g = 0; g < ranges_.size(); ++g) {
    if (layer >= ranges_[g].first && layer < ranges_[g].second) return g;
  }
  throw RangeError("layer " + std::to_string(layer) + " is outside the grouping");
}

std::size_t SparseCode::total_size() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += static_cast<std::size_t>(g.size());
  return n;
}

double SparseCode::squared_norm() const {
  double s = 0.0;
  for (const auto& g : groups) s += g.squaredNorm();
  return s;
}

Vector SparseCode::flatten() const {
  Vector flat(static_cast<Eigen::Index>(total_size()));
  Eigen::Index offset = 0;
  for (const auto& g : groups) {
    flat.segment(offset, g.size()) = g;
    offset += g.size();
  }
  return flat;
}

DirectionDictionary::DirectionDictionary(std::vector<Matrix> layers) : layers_(std::move(layers)) {
  for (const auto& m : layers_) {
    if (m.rows() != layers_.front().rows() || m.cols() != layers_.front().cols()) {
      throw ShapeError("dictionary layers must share one d x l shape");
    }
    if (!m.allFinite()) throw RangeError("dictionary contains a non-finite entry");
  }
}

DirectionDictionary DirectionDictionary::random(std::size_t layers, std::size_t dim,
                                                std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<Matrix> mats;
  mats.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) mats.push_back(gaussian_matrix(rng, dim, size, scale));
  return DirectionDictionary(std::move(mats));
}

}  // namespace age
