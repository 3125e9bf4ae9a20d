#include "age/world.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "age/error.hpp"
#include "age/inference.hpp"
#include "age/linalg.hpp"
#include "age/random.hpp"
#include "age/spectral.hpp"

namespace age {
namespace {

constexpr int kMaxConstructionRetries = 100;
constexpr double kMinGeneratorSingularValue = 1e-6;

double min_pairwise_distance(const std::vector<LatentCode>& codes) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < codes.size(); ++a) {
    for (std::size_t b = a + 1; b < codes.size(); ++b) {
      best = std::min(best, (codes[a].values() - codes[b].values()).norm());
    }
  }
  return best;
}

}  // namespace

void SyntheticWorldSpec::validate() const {
  if (layers == 0 || dim == 0) throw ConfigError("world needs positive layers and dim");
  if (irrelevant_rank == 0 || irrelevant_rank >= dim) {
    throw ConfigError("irrelevant_rank must lie in [1, dim)");
  }
  if (image_dim < layers * dim) throw ConfigError("image_dim must be at least layers * dim");
  if (seen_categories < 2) throw ConfigError("at least two seen categories are required");
  if (!(class_separation > 0.0)) throw ConfigError("class_separation must be positive");
  if (!(code_sparsity >= 0.0 && code_sparsity <= 1.0)) {
    throw ConfigError("code_sparsity must lie in [0, 1]");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (!(category_specific_scale >= 0.0)) {
    throw ConfigError("category_specific_scale must be non-negative");
  }
}

SyntheticWorld::SyntheticWorld(SyntheticWorldSpec spec, std::vector<LatentCode> class_bases,
                               std::vector<Matrix> irrelevant_basis, Matrix generator)
    : spec_(spec),
      class_bases_(std::move(class_bases)),
      irrelevant_basis_(std::move(irrelevant_basis)),
      generator_(std::move(generator)) {
  spec_.validate();
  if (class_bases_.size() != spec_.total_categories() || irrelevant_basis_.size() != spec_.layers ||
      static_cast<std::size_t>(generator_.rows()) != spec_.image_dim ||
      static_cast<std::size_t>(generator_.cols()) != spec_.layers * spec_.dim) {
    throw ShapeError("world components do not match the spec");
  }
  generator_pinv_ = pseudo_inverse(generator_);
  gram_ = generator_.transpose() * generator_;
}

Vector SyntheticWorld::category_direction(std::size_t category) const {
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(spec_.layers * spec_.dim));
  for (const auto& b : class_bases_) mean += b.flatten();
  mean /= static_cast<double>(class_bases_.size());
  Vector dir = class_bases_.at(category).flatten() - mean;
  const double norm = dir.norm();
  return norm > 0.0 ? Vector(dir / norm) : dir;
}

std::string SyntheticWorld::category_name(std::size_t index, std::size_t seen_count) {
  char buf[32];
  if (index < seen_count) {
    std::snprintf(buf, sizeof buf, "seen_%03zu", index);
  } else {
    std::snprintf(buf, sizeof buf, "unseen_%03zu", index - seen_count);
  }
  return buf;
}

bool operator==(const SyntheticWorld& a, const SyntheticWorld& b) {
  return a.class_bases_ == b.class_bases_ && a.irrelevant_basis_ == b.irrelevant_basis_ &&
         a.generator_ == b.generator_;
}

SyntheticWorld generate_world(const SyntheticWorldSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t L = spec.layers;
  const std::size_t d = spec.dim;
  const std::size_t k = spec.irrelevant_rank;

  std::vector<Matrix> basis;
  for (std::size_t l = 0; l < L; ++l) {
    basis.push_back(orthonormalize_mgs(gaussian_matrix(rng, d, k)));
  }

  // Entries of scale sep / sqrt(L (d - k)) put typical pairwise distances near
  // sqrt(2) * sep; draws whose closest pair falls short are redrawn.
  const double scale =
      spec.class_separation / std::sqrt(static_cast<double>(L * (d - k)));
  std::vector<LatentCode> bases;
  bool separated = false;
  for (int attempt = 0; attempt < kMaxConstructionRetries && !separated; ++attempt) {
    bases.clear();
    for (std::size_t c = 0; c < spec.total_categories(); ++c) {
      Matrix values(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(d));
      for (std::size_t l = 0; l < L; ++l) {
        Vector b = gaussian_matrix(rng, d, 1, scale).col(0);
        b -= basis[l] * (basis[l].transpose() * b);
        // Second pass removes what the first projection left behind.
        b -= basis[l] * (basis[l].transpose() * b);
        values.row(static_cast<Eigen::Index>(l)) = b.transpose();
      }
      bases.emplace_back(std::move(values));
    }
    separated = bases.size() < 2 || min_pairwise_distance(bases) >= spec.class_separation;
  }
  if (!separated) {
    throw ConstructionFailed("could not separate class bases by " +
                             std::to_string(spec.class_separation) + " after " +
                             std::to_string(kMaxConstructionRetries) + " draws");
  }

  const double g_scale = 1.0 / std::sqrt(static_cast<double>(spec.image_dim));
  for (int attempt = 0; attempt < kMaxConstructionRetries; ++attempt) {
    Matrix generator = gaussian_matrix(rng, spec.image_dim, L * d, g_scale);
    const SvdResult s = svd(generator);
    if (s.singular_values(s.singular_values.size() - 1) > kMinGeneratorSingularValue) {
      return SyntheticWorld(spec, std::move(bases), std::move(basis), std::move(generator));
    }
  }
  throw ConstructionFailed("could not draw a full-rank generator");
}

LatentDataset sample_dataset(const SyntheticWorld& world, std::size_t n_per_category, Split split,
                             std::uint64_t seed) {
  if (n_per_category == 0) throw ConfigError("n_per_category must be positive");
  const auto& spec = world.spec();
  const std::size_t first = split == Split::kSeen ? 0 : spec.seen_categories;
  const std::size_t count = split == Split::kSeen ? spec.seen_categories : spec.unseen_categories;
  LatentDataset dataset(spec.layers, spec.dim, split);
  Rng rng(seed);
  const auto k = static_cast<Eigen::Index>(spec.irrelevant_rank);
  for (std::size_t c = first; c < first + count; ++c) {
    const std::size_t index = dataset.add_category(SyntheticWorld::category_name(c, spec.seen_categories));
    const Vector direction = spec.category_specific_scale > 0.0 ? world.category_direction(c) : Vector();
    for (std::size_t i = 0; i < n_per_category; ++i) {
      Matrix values = world.class_bases()[c].values();
      for (std::size_t l = 0; l < spec.layers; ++l) {
        Vector s = Vector::Zero(k);
        for (Eigen::Index j = 0; j < k; ++j) {
          if (rng.bernoulli(spec.code_sparsity)) s(j) = rng.normal();
        }
        Vector row = world.irrelevant_basis()[l] * s;
        for (std::size_t j = 0; j < spec.dim; ++j) {
          row(static_cast<Eigen::Index>(j)) += spec.noise_sigma * rng.normal();
        }
        values.row(static_cast<Eigen::Index>(l)) += row.transpose();
      }
      if (spec.category_specific_scale > 0.0) {
        const double r = spec.category_specific_scale * rng.normal();
        values += r * LatentCode::from_flat(direction, spec.layers, spec.dim).values();
      }
      dataset.add_sample(index, LatentCode(std::move(values)));
    }
  }
  return dataset;
}

ImageVector synth_generate(const SyntheticWorld& world, const LatentCode& code) {
  if (code.layers() != world.layers() || code.dim() != world.dim()) {
    throw ShapeError("code shape does not match the world");
  }
  return world.generator() * code.flatten();
}

LatentCode synth_invert(const SyntheticWorld& world, const ImageVector& image) {
  if (static_cast<std::size_t>(image.size()) != world.image_dim()) {
    throw ShapeError("image length does not match the world");
  }
  return LatentCode::from_flat(world.generator_pinv() * image, world.layers(), world.dim());
}

}  // namespace age
