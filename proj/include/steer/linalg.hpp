/*
 Copyright 2026 The steer Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>

#include "steer/errors.hpp"

namespace steer {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix symmetrize(const Matrix& M) { return 0.5 * (M + M.transpose()); }

inline bool is_square(const Matrix& M) { return M.rows() == M.cols(); }

inline bool is_symmetric(const Matrix& M, double tol) {
  return is_square(M) && (M - M.transpose()).cwiseAbs().maxCoeff() <= tol;
}

inline bool all_finite(const Matrix& M) { return M.allFinite(); }

inline Vector symmetric_eigenvalues(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(M),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  return symmetric_eigenvalues(M).minCoeff();
}

/// Spectral norm of a symmetric matrix.
inline double spectral_norm_sym(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  return symmetric_eigenvalues(M).cwiseAbs().maxCoeff();
}

/// Outcome of a definiteness test. `margin` is the smallest eigenvalue and
/// `threshold` the scale-aware cutoff it was compared against.
struct DefinitenessCheck {
  bool ok = false;
  double margin = 0.0;
  double threshold = 0.0;
};

inline constexpr double kDefinitenessRelTol = 1e-10;

/// Strict positive definiteness: min eig > 1e-10·‖M‖₂.
inline DefinitenessCheck check_spd(const Matrix& M) {
  DefinitenessCheck c;
  c.margin = min_eigenvalue(M);
  c.threshold = kDefinitenessRelTol * spectral_norm_sym(M);
  c.ok = is_symmetric(M, 1e-10 * (1.0 + M.cwiseAbs().maxCoeff())) &&
         c.margin > c.threshold;
  return c;
}

/// Positive semidefiniteness: min eig ≥ −1e-10·‖M‖₂.
inline DefinitenessCheck check_psd(const Matrix& M) {
  DefinitenessCheck c;
  c.margin = min_eigenvalue(M);
  c.threshold = -kDefinitenessRelTol * spectral_norm_sym(M);
  c.ok = is_symmetric(M, 1e-10 * (1.0 + M.cwiseAbs().maxCoeff())) &&
         c.margin >= c.threshold;
  return c;
}

/// [B, AB, …, A^{n−1}B].
inline Matrix controllability_matrix(const Matrix& A, const Matrix& B) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  Matrix C(n, n * m);
  Matrix block = B;
  for (Eigen::Index k = 0; k < n; ++k) {
    C.middleCols(k * m, m) = block;
    block = A * block;
  }
  return C;
}

/// Numerical rank from singular values, threshold rel_tol·σ_max.
inline Eigen::Index numerical_rank(const Matrix& M, double rel_tol) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++r;
  }
  return r;
}

/// Inverse of a symmetric positive definite matrix; throws when the minimum
/// eigenvalue is at or below `min_eig`.
inline Matrix spd_inverse(const Matrix& M, std::size_t index = 0,
                          double min_eig = 1e-10) {
  const double lo = min_eigenvalue(M);
  if (!(lo > min_eig)) {
    throw SingularMatrixError("matrix at index " + std::to_string(index) +
                                  " is not positive definite (min eigenvalue " +
                                  std::to_string(lo) + ")",
                              index, lo);
  }
  return symmetrize(M.llt().solve(Matrix::Identity(M.rows(), M.cols())));
}

/// Upper-triangle vectorization, column-major (i ≤ j), unscaled.
inline Vector vech(const Matrix& M) {
  const Eigen::Index n = M.rows();
  Vector v(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) v(k++) = M(i, j);
  return v;
}

inline Matrix unvech(const Vector& v, Eigen::Index n) {
  Matrix M(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) {
      M(i, j) = v(k);
      M(j, i) = v(k);
      ++k;
    }
  return M;
}

}  // namespace steer
