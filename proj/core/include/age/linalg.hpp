#pragma once

#include "age/latent.hpp"

namespace age {

// Orthonormalizes the columns of `basis` by modified Gram-Schmidt. A column
// whose residual norm falls below `rank_tol` times its original norm (or is
// zero) raises RankError.
Matrix orthonormalize_mgs(const Matrix& basis, double rank_tol = 1e-10);

class Rng;

// rows x cols matrix of scaled standard normal draws, filled column by column.
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0);

}  // namespace age
