#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "age/latent.hpp"

namespace age {

struct SyntheticWorldSpec {
  std::size_t layers = 3;
  std::size_t dim = 32;
  std::size_t image_dim = 128;
  std::size_t seen_categories = 8;
  std::size_t unseen_categories = 4;
  std::size_t irrelevant_rank = 4;
  double class_separation = 6.0;
  double code_sparsity = 0.5;
  double noise_sigma = 0.02;
  // Standard deviation of a per-sample displacement along the sample's own
  // centered class direction. Zero gives the shared-subspace world; a positive
  // value makes part of the within-class variation category-specific.
  double category_specific_scale = 0.0;
  std::uint64_t seed = 1;

  std::size_t total_categories() const { return seen_categories + unseen_categories; }
  // Throws ConfigError when an invariant is violated.
  void validate() const;
};

// Seeded ground truth: class bases orthogonal to a shared irrelevant subspace
// and a full-column-rank linear generator. Immutable after construction.
class SyntheticWorld {
 public:
  SyntheticWorld(SyntheticWorldSpec spec, std::vector<LatentCode> class_bases,
                 std::vector<Matrix> irrelevant_basis, Matrix generator);

  const SyntheticWorldSpec& spec() const { return spec_; }
  std::size_t layers() const { return spec_.layers; }
  std::size_t dim() const { return spec_.dim; }
  std::size_t image_dim() const { return spec_.image_dim; }

  // Seen categories occupy indices [0, M), unseen ones [M, M + K).
  const std::vector<LatentCode>& class_bases() const { return class_bases_; }
  const std::vector<Matrix>& irrelevant_basis() const { return irrelevant_basis_; }
  const Matrix& generator() const { return generator_; }
  const Matrix& generator_pinv() const { return generator_pinv_; }
  // G^T G, the metric reconstruction losses use in image space.
  const Matrix& generator_gram() const { return gram_; }

  // Unit-norm flattened direction of category c's base relative to the mean
  // of all bases; drives the category-specific variant.
  Vector category_direction(std::size_t category) const;

  static std::string category_name(std::size_t index, std::size_t seen_count);

  friend bool operator==(const SyntheticWorld& a, const SyntheticWorld& b);

 private:
  SyntheticWorldSpec spec_;
  std::vector<LatentCode> class_bases_;
  std::vector<Matrix> irrelevant_basis_;
  Matrix generator_;
  Matrix generator_pinv_;
  Matrix gram_;
};

using ImageVector = Vector;

SyntheticWorld generate_world(const SyntheticWorldSpec& spec);

LatentDataset sample_dataset(const SyntheticWorld& world, std::size_t n_per_category,
                             Split split, std::uint64_t seed);

ImageVector synth_generate(const SyntheticWorld& world, const LatentCode& code);
LatentCode synth_invert(const SyntheticWorld& world, const ImageVector& image);

}  // namespace age
