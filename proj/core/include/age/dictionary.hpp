#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "age/latent.hpp"

namespace age {

// Contiguous layer ranges [begin, end) that share one sparse code.
class LayerGrouping {
 public:
  LayerGrouping() = default;
  // Throws ConfigError unless the ranges are disjoint, contiguous and cover
  // [0, layers).
  LayerGrouping(std::vector<std::pair<std::size_t, std::size_t>> ranges, std::size_t layers);

  static LayerGrouping per_layer(std::size_t layers);
  // Bottom/middle/top grouping of an 18-layer style space: 0-2, 3-6, 7-17.
  static LayerGrouping stylegan18();

  std::size_t group_count() const { return ranges_.size(); }
  std::size_t layer_count() const { return layers_; }
  std::size_t group_of(std::size_t layer) const;
  std::pair<std::size_t, std::size_t> range(std::size_t group) const { return ranges_.at(group); }
  std::size_t group_size(std::size_t group) const {
    return ranges_.at(group).second - ranges_.at(group).first;
  }
  const std::vector<std::pair<std::size_t, std::size_t>>& ranges() const { return ranges_; }

  friend bool operator==(const LayerGrouping&, const LayerGrouping&) = default;

 private:
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
  std::size_t layers_ = 0;
};

// One signed coefficient vector per layer group.
struct SparseCode {
  std::vector<Vector> groups;

  std::size_t group_count() const { return groups.size(); }
  std::size_t total_size() const;
  double squared_norm() const;
  Vector flatten() const;

  friend bool operator==(const SparseCode& a, const SparseCode& b) {
    if (a.groups.size() != b.groups.size()) return false;
    for (std::size_t g = 0; g < a.groups.size(); ++g) {
      if (a.groups[g].size() != b.groups[g].size() || a.groups[g] != b.groups[g]) return false;
    }
    return true;
  }
};

// Per-layer d x l matrices of candidate editing directions.
class DirectionDictionary {
 public:
  DirectionDictionary() = default;
  explicit DirectionDictionary(std::vector<Matrix> layers);

  // Gaussian entries with variance 1/d, i.e. unit expected column norm.
  static DirectionDictionary random(std::size_t layers, std::size_t dim, std::size_t size,
                                    std::uint64_t seed);

  std::size_t layers() const { return layers_.size(); }
  std::size_t dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().rows()); }
  std::size_t size() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().cols()); }

  const Matrix& layer(std::size_t l) const { return layers_.at(l); }
  Matrix& layer(std::size_t l) { return layers_.at(l); }
  const std::vector<Matrix>& per_layer() const { return layers_; }

  friend bool operator==(const DirectionDictionary&, const DirectionDictionary&) = default;

 private:
  std::vector<Matrix> layers_;
};

}  // namespace age
