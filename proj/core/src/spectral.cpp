#include "age/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "age/error.hpp"
#include "age/linalg.hpp"

namespace age {
namespace {

// Hestenes iteration on a tall (rows >= cols) matrix.
SvdResult jacobi_tall(const Matrix& a) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  Matrix u = a;
  Matrix v = Matrix::Identity(n, n);
  const double frob = a.norm();
  // Columns below this norm are numerically zero and left alone.
  const double zero_sq = std::pow(1e-300 + 1e-15 * frob, 2);

  bool converged = n < 2 || frob == 0.0;
  for (int sweep = 0; sweep < kMaxJacobiSweeps && !converged; ++sweep) {
    bool rotated = false;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double alpha = u.col(i).squaredNorm();
        const double beta = u.col(j).squaredNorm();
        const double gamma = u.col(i).dot(u.col(j));
        if (alpha <= zero_sq || beta <= zero_sq) continue;
        if (std::abs(gamma) <= kJacobiTolerance * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index r = 0; r < m; ++r) {
          const double ui = u(r, i);
          const double uj = u(r, j);
          u(r, i) = c * ui - s * uj;
          u(r, j) = s * ui + c * uj;
        }
        for (Eigen::Index r = 0; r < n; ++r) {
          const double vi = v(r, i);
          const double vj = v(r, j);
          v(r, i) = c * vi - s * vj;
          v(r, j) = s * vi + c * vj;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    throw ConvergenceError("Jacobi SVD did not converge in " + std::to_string(kMaxJacobiSweeps) +
                           " sweeps");
  }

  Vector sigma(n);
  for (Eigen::Index j = 0; j < n; ++j) sigma(j) = u.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return sigma(x) > sigma(y); });

  SvdResult result{Matrix::Zero(m, n), Vector(n), Matrix(n, n)};
  const double cutoff = std::sqrt(zero_sq);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    const double s = sigma(src);
    result.v.col(k) = v.col(src);
    if (s > cutoff) {
      result.singular_values(k) = s;
      result.u.col(k) = u.col(src) / s;
    } else {
      result.singular_values(k) = 0.0;
    }
  }
  // Complete left vectors of zero singular values to an orthonormal set.
  Eigen::Index next_unit = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (result.singular_values(k) > 0.0) continue;
    while (true) {
      Vector candidate = Vector::Unit(m, next_unit++);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index q = 0; q < n; ++q) {
          if (q == k || result.u.col(q).squaredNorm() == 0.0) continue;
          candidate -= result.u.col(q).dot(candidate) * result.u.col(q);
        }
      }
      const double norm = candidate.norm();
      if (norm > 1e-8) {
        result.u.col(k) = candidate / norm;
        break;
      }
    }
  }
  return result;
}

}  // namespace

Matrix SvdResult::reconstruct() const {
  return u * singular_values.asDiagonal() * v.transpose();
}

SvdResult svd(const Matrix& matrix) {
  if (!matrix.allFinite()) throw RangeError("svd input contains a non-finite entry");
  if (matrix.rows() >= matrix.cols()) return jacobi_tall(matrix);
  SvdResult t = jacobi_tall(matrix.transpose());
  return {std::move(t.v), std::move(t.singular_values), std::move(t.u)};
}

SubspaceScore principal_angles(const Matrix& basis1, const Matrix& basis2) {
  if (basis1.rows() != basis2.rows()) throw ShapeError("bases live in different ambient dims");
  const Matrix q1 = orthonormalize_mgs(basis1);
  const Matrix q2 = orthonormalize_mgs(basis2);
  const SvdResult s = svd(q1.transpose() * q2);
  SubspaceScore score;
  for (Eigen::Index k = 0; k < s.singular_values.size(); ++k) {
    score.cosines.push_back(std::clamp(s.singular_values(k), 0.0, 1.0));
  }
  if (!score.cosines.empty()) {
    score.mean_cosine = std::accumulate(score.cosines.begin(), score.cosines.end(), 0.0) /
                        static_cast<double>(score.cosines.size());
  }
  return score;
}

namespace {

// Orthonormal basis of the column space; redundant columns are dropped.
Matrix column_space(const Matrix& m) {
  const SvdResult s = svd(m);
  Eigen::Index rank = 0;
  while (rank < s.singular_values.size() && s.singular_values(rank) > 1e-10 * s.singular_values(0)) ++rank;
  if (rank == 0) throw RankError("dictionary layer has no nonzero column");
  return s.u.leftCols(rank);
}

}  // namespace

std::vector<SubspaceScore> subspace_recovery_score(const RefinedDictionary& refined,
                                                   const SyntheticWorld& world) {
  if (refined.layers.size() != world.layers()) throw ShapeError("layer count mismatch");
  std::vector<SubspaceScore> scores;
  for (std::size_t l = 0; l < refined.layers.size(); ++l) {
    scores.push_back(principal_angles(column_space(refined.layers[l]), world.irrelevant_basis()[l]));
  }
  return scores;
}

Matrix transferability_check(const std::vector<LatentCode>& codes,
                             const RefinedDictionary& refined, const SparseCode& n_tilde,
                             double alpha) {
  if (codes.size() < 2) throw InsufficientData("transferability needs at least two codes");
  std::vector<Vector> displacement;
  for (const auto& code : codes) {
    if (!code.same_shape(codes.front())) throw ShapeError("codes differ in shape");
    displacement.push_back(edit(code, refined, n_tilde, alpha).flatten() - code.flatten());
  }
  const auto n = static_cast<Eigen::Index>(codes.size());
  Matrix cosine(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& a = displacement[static_cast<std::size_t>(i)];
      const auto& b = displacement[static_cast<std::size_t>(j)];
      const double na = a.norm();
      const double nb = b.norm();
      if (na == 0.0 && nb == 0.0) {
        cosine(i, j) = 1.0;
      } else if (na == 0.0 || nb == 0.0) {
        cosine(i, j) = 0.0;
      } else {
        cosine(i, j) = a.dot(b) / (na * nb);
      }
    }
  }
  return cosine;
}

std::vector<LayerDirections> disentangled_directions(const RefinedDictionary& refined) {
  std::vector<LayerDirections> out;
  for (const auto& layer : refined.layers) {
    SvdResult s = svd(layer);
    out.push_back({std::move(s.u), std::move(s.singular_values)});
  }
  return out;
}

}  // namespace age
