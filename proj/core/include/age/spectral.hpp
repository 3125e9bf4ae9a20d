#pragma once

#include <cstddef>
#include <vector>

#include "age/inference.hpp"
#include "age/latent.hpp"
#include "age/world.hpp"

namespace age {

struct SvdResult {
  Matrix u;               // rows x r, orthonormal columns
  Vector singular_values;  // r, descending
  Matrix v;               // cols x r, orthonormal columns

  Matrix reconstruct() const;
};

// One-sided (Hestenes) Jacobi SVD. A column pair is rotated while its cosine
// exceeds `kJacobiTolerance`; throws ConvergenceError after `kMaxJacobiSweeps`.
inline constexpr double kJacobiTolerance = 1e-12;
inline constexpr int kMaxJacobiSweeps = 60;

SvdResult svd(const Matrix& matrix);

struct SubspaceScore {
  std::vector<double> cosines;  // descending, clamped to [0, 1]
  double mean_cosine = 0.0;
};

SubspaceScore principal_angles(const Matrix& basis1, const Matrix& basis2);

// Principal angles between span(A_f) and span(U_true) per layer; redundant
// columns of A_f do not count toward the rank.
std::vector<SubspaceScore> subspace_recovery_score(const RefinedDictionary& refined,
                                                   const SyntheticWorld& world);

// Applies the same (n_tilde, alpha) edit to each code and returns the pairwise
// cosine similarity of the flattened displacements. Two zero displacements
// count as cosine 1.
Matrix transferability_check(const std::vector<LatentCode>& codes,
                             const RefinedDictionary& refined, const SparseCode& n_tilde,
                             double alpha);

struct LayerDirections {
  Matrix directions;       // d x r, ordered by singular value
  Vector singular_values;
};

std::vector<LayerDirections> disentangled_directions(const RefinedDictionary& refined);

}  // namespace age
