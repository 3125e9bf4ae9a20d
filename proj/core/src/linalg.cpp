#include "age/linalg.hpp"

#include "age/error.hpp"
#include "age/random.hpp"

namespace age {

Matrix orthonormalize_mgs(const Matrix& basis, double rank_tol) {
  Matrix q = basis;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    const double original = basis.col(j).norm();
    for (Eigen::Index i = 0; i < j; ++i) {
      q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
    }
    const double residual = q.col(j).norm();
    if (original == 0.0 || residual <= rank_tol * original) {
      throw RankError("basis column " + std::to_string(j) + " is linearly dependent");
    }
    q.col(j) /= residual;
  }
  return q;
}

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

}  // namespace age
