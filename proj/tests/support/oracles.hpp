#pragma once

// Straight-line reference implementations used as test oracles. Nothing here
// calls into the library's numerics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "age/encoder.hpp"
#include "age/latent.hpp"

namespace oracle {

using age::Matrix;
using age::Vector;

inline double pairwise_sum(const double* v, std::size_t n) {
  if (n == 0) return 0.0;
  if (n == 1) return v[0];
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline Vector matvec(const Matrix& m, const Vector& v) {
  Vector out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) s += m(i, j) * v(j);
    out(i) = s;
  }
  return out;
}

// a^T b by three loops.
inline Matrix transpose_times(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.rows(); ++k) s += a(k, i) * b(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

inline double frobenius_sq(const Matrix& m) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) s += m(i, j) * m(i, j);
  }
  return s;
}

// n = W5 phi(W4 phi(W3 phi(W2 phi(W1 v + b1) + b2) + b3) + b4) + b5, one
// scalar at a time.
inline Vector mlp_interpret(const age::Mlp& net, const Vector& input, double slope) {
  std::vector<double> a(input.data(), input.data() + input.size());
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    const Matrix& w = net.weights[k];
    std::vector<double> z(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      double s = net.biases[k](i);
      for (Eigen::Index j = 0; j < w.cols(); ++j) s += w(i, j) * a[static_cast<std::size_t>(j)];
      const bool last = k + 1 == net.weights.size();
      z[static_cast<std::size_t>(i)] = last || s > 0.0 ? s : slope * s;
    }
    a = std::move(z);
  }
  return Eigen::Map<Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
}

// Number of eigenvalues of symmetric s below x, by Sylvester inertia of the
// unpivoted LDL^T factorization of s - xI.
inline std::size_t eigen_count_below(const Matrix& s, double x) {
  const Eigen::Index n = s.rows();
  Matrix a = s - x * Matrix::Identity(n, n);
  std::vector<double> d(static_cast<std::size_t>(n));
  Matrix l = Matrix::Identity(n, n);
  std::size_t negatives = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    double dj = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) dj -= l(j, k) * l(j, k) * d[static_cast<std::size_t>(k)];
    if (dj == 0.0) dj = -1e-300;
    d[static_cast<std::size_t>(j)] = dj;
    if (dj < 0.0) ++negatives;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k) * d[static_cast<std::size_t>(k)];
      l(i, j) = v / dj;
    }
  }
  return negatives;
}

// Eigenvalues of symmetric s, descending, each bisected to `tol`.
inline std::vector<double> symmetric_eigenvalues(const Matrix& s, double tol = 1e-14) {
  const auto n = static_cast<std::size_t>(s.rows());
  double radius = 0.0;  // Gershgorin
  for (Eigen::Index i = 0; i < s.rows(); ++i) radius = std::max(radius, s.row(i).cwiseAbs().sum());
  std::vector<double> out;
  for (std::size_t k = 0; k < n; ++k) {
    // k-th smallest: the smallest x with count_below(x) > k.
    double lo = -radius - 1.0, hi = radius + 1.0;
    while (hi - lo > tol * std::max(1.0, std::abs(hi))) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (eigen_count_below(s, mid) > k) hi = mid;
      else lo = mid;
    }
    out.push_back(0.5 * (lo + hi));
  }
  std::sort(out.rbegin(), out.rend());
  return out;
}

// Singular values of m, descending: square roots of the eigenvalues of m^T m
// (or m m^T when wide).
inline std::vector<double> singular_values(const Matrix& m) {
  const Matrix g = m.rows() >= m.cols() ? transpose_times(m, m) : transpose_times(m.transpose(), m.transpose());
  auto ev = symmetric_eigenvalues(g);
  for (auto& v : ev) v = std::sqrt(std::max(v, 0.0));
  return ev;
}

// Indices of the t largest entries, larger first, lower index on ties.
inline std::vector<std::size_t> top_t(const Vector& v, std::size_t t) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double va = v(static_cast<Eigen::Index>(a)), vb = v(static_cast<Eigen::Index>(b));
    return va != vb ? va > vb : a < b;
  });
  idx.resize(t);
  return idx;
}

// Eigen's complete orthogonal decomposition, independent of the library SVD.
inline Matrix pinv(const Matrix& m) { return Eigen::CompleteOrthogonalDecomposition<Matrix>(m).pseudoInverse(); }

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double rel_diff(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

}  // namespace oracle
