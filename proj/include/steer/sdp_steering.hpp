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

// Time-discretized covariance-steering program and its first-order solver.
//
// With U(t) := −Σ(t)K(t)ᵀ the closed-loop Lyapunov equation becomes affine in
// (Σ, U) and the control energy tr(KΣKᵀ) = tr(UᵀΣ⁻¹U) is bounded by tr(Y)
// through the linear matrix inequality
//
//     [ Y   Uᵀ ]
//     [ U   Σ  ]  ⪰ 0.
//
// Each interval k contributes one (m+n)×(m+n) PSD block M_k holding
// (Y_k, U_k, Σ_k). Explicit-Euler dynamics tie consecutive Σ-blocks
// together; Σ₀ and Σ_T are fixed. The program
//
//     minimize   ½ Σ_k dt_k [tr Y_k + tr S_k Σ_k]
//     subject to E·x = b,  M_k ⪰ 0
//
// is solved by over-relaxed ADMM alternating an exact projection onto the
// affine set (one sparse factorization of E·Eᵀ, reused every iteration) with
// independent per-block PSD projections. Blocks are stored as scaled
// half-vectorizations so the Euclidean metric on x is the Frobenius metric
// on the blocks.

#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "steer/core_model.hpp"
#include "steer/errors.hpp"
#include "steer/linalg.hpp"
#include "steer/parallel.hpp"

namespace steer::sdp {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct SolverOptions {
  int max_iters = 50000;
  double eps_primal = 1e-6;
  double eps_dual = 1e-6;
  double rho = 1.0;  // relative to the mean step width
  double over_relaxation = 1.6;
  unsigned threads = 1;

  void validate() const {
    if (max_iters <= 0) throw StructuralError("max_iters must be positive");
    if (!(eps_primal > 0.0 && eps_primal < 1.0) || !(eps_dual > 0.0 && eps_dual < 1.0))
      throw StructuralError("solver tolerances must lie in (0, 1)");
    if (!(rho > 0.0)) throw StructuralError("rho must be positive");
    if (!(over_relaxation >= 1.0 && over_relaxation < 2.0))
      throw StructuralError("over_relaxation must lie in [1, 2)");
  }
};

enum class SolveStatus { kConverged, kIterationCap, kInfeasibleDetected };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kIterationCap: return "iteration-cap";
    case SolveStatus::kInfeasibleDetected: return "infeasible-detected";
  }
  return "unknown";
}

struct SolveStats {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective_value = 0.0;
  SolveStatus status = SolveStatus::kIterationCap;
};

namespace detail {

inline constexpr double kSqrt2 = 1.4142135623730951;

inline Eigen::Index svec_dim(Eigen::Index d) { return d * (d + 1) / 2; }

/// Position of entry (i, j) in the column-major upper-triangle layout.
inline Eigen::Index svec_pos(Eigen::Index i, Eigen::Index j) {
  if (i > j) std::swap(i, j);
  return j * (j + 1) / 2 + i;
}

/// Coefficient c with M(i, j) = c · svec(M)[svec_pos(i, j)].
inline double svec_coef(Eigen::Index i, Eigen::Index j) {
  return i == j ? 1.0 : 1.0 / kSqrt2;
}

template <class Seg>
void svec_into(const Matrix& M, Seg&& out) {
  const Eigen::Index d = M.rows();
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i <= j; ++i)
      out(svec_pos(i, j)) = i == j ? M(i, i) : kSqrt2 * 0.5 * (M(i, j) + M(j, i));
}

template <class Seg>
Matrix smat(const Seg& v, Eigen::Index d) {
  Matrix M(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double x = v(svec_pos(i, j)) * svec_coef(i, j);
      M(i, j) = x;
      M(j, i) = x;
    }
  return M;
}

}  // namespace detail

/// Frobenius-nearest PSD matrix: eigendecomposition with negative
/// eigenvalues clipped to zero.
inline Matrix project_psd(const Matrix& M) {
  if (!is_square(M)) throw StructuralError("project_psd needs a square matrix");
  const double scale = std::max(1.0, M.size() ? M.cwiseAbs().maxCoeff() : 0.0);
  if (!is_symmetric(M, 1e-8 * scale))
    throw StructuralError("project_psd input is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(M));
  const Vector lambda = es.eigenvalues().cwiseMax(0.0);
  return symmetrize(es.eigenvectors() * lambda.asDiagonal() *
                    es.eigenvectors().transpose());
}

/// Minimum eigenvalue of [[Y, Uᵀ], [U, Σ]].
inline double verify_lmi(const Matrix& Y, const Matrix& U, const Matrix& Sigma) {
  const Eigen::Index m = Y.rows();
  const Eigen::Index n = Sigma.rows();
  if (!is_square(Y) || !is_square(Sigma) || U.rows() != n || U.cols() != m)
    throw StructuralError("verify_lmi: inconsistent block dimensions");
  Matrix M(m + n, m + n);
  M.topLeftCorner(m, m) = Y;
  M.topRightCorner(m, n) = U.transpose();
  M.bottomLeftCorner(n, m) = U;
  M.bottomRightCorner(n, n) = Sigma;
  return min_eigenvalue(M);
}

/// K_k = −U_kᵀ Σ_k⁻¹ for each interval of `grid`.
inline GainSchedule recover_gains(const TimeGrid& grid, const std::vector<Matrix>& Sigma,
                                  const std::vector<Matrix>& U) {
  const std::size_t N = grid.intervals();
  if (Sigma.size() < N || U.size() != N)
    throw StructuralError("recover_gains: need N covariances and N U-blocks");
  std::vector<Matrix> K(N);
  for (std::size_t k = 0; k < N; ++k) {
    const Matrix inv = spd_inverse(Sigma[k], k, 1e-10);
    K[k] = -U[k].transpose() * inv;
  }
  return GainSchedule(grid, std::move(K));
}

class DiscreteSteeringProgram {
 public:
  DiscreteSteeringProgram(const SteeringProblem& p, std::size_t N)
      : grid_(TimeGrid::uniform(p.T(), std::max<std::size_t>(N, 1))),
        A_(p.A()),
        B_(p.B()),
        Sigma0_(symmetrize(p.Sigma0())),
        SigmaT_(symmetrize(p.SigmaT())),
        n_(p.n()),
        m_(p.m()) {
    if (N < 1) throw StructuralError("discretization needs at least one interval");
    if (!is_symmetric(p.Sigma0(), 1e-10 * (1 + p.Sigma0().cwiseAbs().maxCoeff())) ||
        !is_symmetric(p.SigmaT(), 1e-10 * (1 + p.SigmaT().cwiseAbs().maxCoeff())))
      throw StructuralError("boundary covariances must be symmetric");
    S_.reserve(N);
    for (std::size_t k = 0; k < N; ++k) S_.push_back(symmetrize(p.S(grid_.t(k))));
    build();
  }

  const TimeGrid& grid() const { return grid_; }
  std::size_t intervals() const { return grid_.intervals(); }
  Eigen::Index n() const { return n_; }
  Eigen::Index m() const { return m_; }
  Eigen::Index block_dim() const { return n_ + m_; }
  Eigen::Index block_size() const { return detail::svec_dim(n_ + m_); }
  Eigen::Index variable_count() const { return block_size() * static_cast<Eigen::Index>(intervals()); }
  /// Number of Σ matrices in the program (N + 1, including both fixed ends).
  std::size_t sigma_count() const { return intervals() + 1; }

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const Matrix& Sigma0() const { return Sigma0_; }
  const Matrix& SigmaT() const { return SigmaT_; }
  const Matrix& S(std::size_t k) const { return S_[k]; }

  const SparseMatrix& constraints() const { return E_; }
  const Vector& rhs() const { return b_; }
  const Vector& cost() const { return c_; }

  Matrix block(const Vector& x, std::size_t k) const {
    return detail::smat(x.segment(static_cast<Eigen::Index>(k) * block_size(), block_size()),
                        block_dim());
  }
  Matrix Y(const Vector& x, std::size_t k) const { return block(x, k).topLeftCorner(m_, m_); }
  Matrix U(const Vector& x, std::size_t k) const { return block(x, k).bottomLeftCorner(n_, m_); }
  Matrix Sigma(const Vector& x, std::size_t k) const {
    if (k == intervals()) return SigmaT_;
    return block(x, k).bottomRightCorner(n_, n_);
  }

  /// Right-hand side of the Euler step, Σ_k + dt·(AΣ_k + Σ_kAᵀ + BU_kᵀ + U_kBᵀ + BBᵀ).
  Matrix euler_step(std::size_t k, const Matrix& Sigma, const Matrix& U) const {
    const double h = grid_.dt(k);
    return Sigma + h * (A_ * Sigma + Sigma * A_.transpose() + B_ * U.transpose() +
                        U * B_.transpose() + B_ * B_.transpose());
  }

 private:
  void build() {
    const std::size_t N = intervals();
    const Eigen::Index d = block_dim();
    const Eigen::Index bs = block_size();
    const Eigen::Index ne = detail::svec_dim(n_);
    const Eigen::Index rows = ne * static_cast<Eigen::Index>(N + 1);
    const Matrix BBt = B_ * B_.transpose();

    std::vector<Eigen::Triplet<double>> trips;
    b_ = Vector::Zero(rows);
    auto var = [&](std::size_t k, Eigen::Index i, Eigen::Index j) {
      return static_cast<Eigen::Index>(k) * bs + detail::svec_pos(i, j);
    };
    auto add_sigma = [&](Eigen::Index row, std::size_t k, Eigen::Index i, Eigen::Index j, double w) {
      trips.emplace_back(row, var(k, m_ + i, m_ + j), w * detail::svec_coef(m_ + i, m_ + j));
    };
    auto add_u = [&](Eigen::Index row, std::size_t k, Eigen::Index i, Eigen::Index q, double w) {
      trips.emplace_back(row, var(k, m_ + i, q), w * detail::svec_coef(m_ + i, q));
    };
    // Coefficients of −[Σ_k + dt(AΣ_k + Σ_kAᵀ + BU_kᵀ + U_kBᵀ)]_{ij}.
    auto add_step = [&](Eigen::Index row, std::size_t k, Eigen::Index i, Eigen::Index j, double sign) {
      const double h = grid_.dt(k);
      add_sigma(row, k, i, j, -sign);
      for (Eigen::Index l = 0; l < n_; ++l) {
        if (A_(i, l) != 0.0) add_sigma(row, k, l, j, -sign * h * A_(i, l));
        if (A_(j, l) != 0.0) add_sigma(row, k, i, l, -sign * h * A_(j, l));
      }
      for (Eigen::Index q = 0; q < m_; ++q) {
        if (B_(i, q) != 0.0) add_u(row, k, j, q, -sign * h * B_(i, q));
        if (B_(j, q) != 0.0) add_u(row, k, i, q, -sign * h * B_(j, q));
      }
    };

    Eigen::Index row = 0;
    for (Eigen::Index j = 0; j < n_; ++j)
      for (Eigen::Index i = 0; i <= j; ++i, ++row) {
        add_sigma(row, 0, i, j, 1.0);
        b_(row) = Sigma0_(i, j);
      }
    for (std::size_t k = 0; k < N; ++k) {
      const double h = grid_.dt(k);
      for (Eigen::Index j = 0; j < n_; ++j)
        for (Eigen::Index i = 0; i <= j; ++i, ++row) {
          if (k + 1 < N) {
            add_sigma(row, k + 1, i, j, 1.0);
            add_step(row, k, i, j, 1.0);
            b_(row) = h * BBt(i, j);
          } else {
            add_step(row, k, i, j, -1.0);
            b_(row) = SigmaT_(i, j) - h * BBt(i, j);
          }
        }
    }
    E_.resize(rows, variable_count());
    E_.setFromTriplets(trips.begin(), trips.end());
    E_.makeCompressed();

    c_ = Vector::Zero(variable_count());
    for (std::size_t k = 0; k < N; ++k) {
      Matrix C = Matrix::Zero(d, d);
      C.topLeftCorner(m_, m_).setIdentity();
      C.bottomRightCorner(n_, n_) = S_[k];
      C *= 0.5 * grid_.dt(k);
      detail::svec_into(C, c_.segment(static_cast<Eigen::Index>(k) * bs, bs));
    }
  }

  TimeGrid grid_;
  Matrix A_, B_, Sigma0_, SigmaT_;
  std::vector<Matrix> S_;
  Eigen::Index n_, m_;
  SparseMatrix E_;
  Vector b_, c_;
};

inline DiscreteSteeringProgram discretize(const SteeringProblem& p, std::size_t N) {
  if (N < 1) throw StructuralError("discretization needs at least one interval");
  return DiscreteSteeringProgram(p, N);
}

struct SteeringSolution {
  TimeGrid grid;
  std::vector<Matrix> Sigma;  // N + 1
  std::vector<Matrix> U;      // N
  std::vector<Matrix> Y;      // N
  SolveStats stats;

  CovariancePath path() const { return CovariancePath(grid, Sigma); }
  GainSchedule gains() const { return recover_gains(grid, Sigma, U); }
};

/// Orthogonal projection onto {x : E x = b}.
class AffineProjector {
 public:
  explicit AffineProjector(const SparseMatrix& E, const Vector& b) : E_(E), b_(b) {
    EEt_ = E_ * SparseMatrix(E_.transpose());
    double scale = 0.0;
    for (Eigen::Index i = 0; i < EEt_.rows(); ++i) scale = std::max(scale, EEt_.coeff(i, i));
    // The shift only matters when E is rank deficient; refinement below
    // removes its effect otherwise.
    ldlt_.setShift(1e-12 * std::max(scale, 1.0));
    ldlt_.compute(EEt_);
    if (ldlt_.info() != Eigen::Success)
      throw StructuralError("failed to factor the affine constraint system");
  }

  Vector project(const Vector& v) const {
    const Vector r = E_ * v - b_;
    Vector w = ldlt_.solve(r);
    for (int it = 0; it < 3; ++it) w += ldlt_.solve(r - EEt_ * w);
    return v - E_.transpose() * w;
  }

  double violation(const Vector& x) const {
    return (E_ * x - b_).cwiseAbs().maxCoeff();
  }

 private:
  const SparseMatrix& E_;
  const Vector& b_;
  SparseMatrix EEt_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

/// Solves the discretized program. Returns the affine-feasible iterate, so
/// the boundary and dynamics equalities hold to linear-solve precision and
/// LMI margins are bounded below by −primal_residual.
inline SteeringSolution solve(const DiscreteSteeringProgram& prog,
                              const SolverOptions& opts = {}) {
  opts.validate();
  const std::size_t N = prog.intervals();
  const Eigen::Index bs = prog.block_size();
  const Eigen::Index d = prog.block_dim();
  const Eigen::Index nv = prog.variable_count();
  const Vector& c = prog.cost();

  AffineProjector affine(prog.constraints(), prog.rhs());
  const double rho = opts.rho * prog.grid().horizon() / static_cast<double>(N);
  const double alpha = opts.over_relaxation;

  Vector x = affine.project(Vector::Zero(nv));
  Vector z = Vector::Zero(nv);
  Vector u = Vector::Zero(nv);
  Vector z_prev(nv), w(nv);

  SolveStats stats;
  const double b_scale = 1.0 + prog.rhs().cwiseAbs().maxCoeff();
  const bool affine_inconsistent = affine.violation(x) > 1e-9 * b_scale;

  auto cone_step = [&](const Vector& in, Vector& out) {
    parallel_for(
        N,
        [&](std::size_t k) {
          const Eigen::Index off = static_cast<Eigen::Index>(k) * bs;
          Eigen::SelfAdjointEigenSolver<Matrix> es(detail::smat(in.segment(off, bs), d));
          const Vector lambda = es.eigenvalues().cwiseMax(0.0);
          const Matrix P = es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
          detail::svec_into(P, out.segment(off, bs));
        },
        opts.threads);
  };

  constexpr int kInfeasibilityWindow = 500;
  std::vector<double> gap_history;
  int iter = 0;
  if (affine_inconsistent) {
    stats.status = SolveStatus::kInfeasibleDetected;
    stats.primal_residual = affine.violation(x);
  } else {
    for (iter = 1; iter <= opts.max_iters; ++iter) {
      x = affine.project(z - u - c / rho);
      const Vector xr = alpha * x + (1.0 - alpha) * z;
      z_prev = z;
      w = xr + u;
      cone_step(w, z);
      u += xr - z;

      stats.primal_residual = (x - z).cwiseAbs().maxCoeff();
      stats.dual_residual = rho * (z - z_prev).cwiseAbs().maxCoeff();
      if (!std::isfinite(stats.primal_residual) || !std::isfinite(stats.dual_residual)) {
        stats.status = SolveStatus::kInfeasibleDetected;
        break;
      }
      if (stats.primal_residual <= opts.eps_primal && stats.dual_residual <= opts.eps_dual) {
        stats.status = SolveStatus::kConverged;
        break;
      }
      // A primal gap that stays bounded away from zero over a long window
      // (while u grows without bound) signals an empty intersection of the
      // affine set and the cone.
      if (iter % kInfeasibilityWindow == 0) {
        gap_history.push_back(stats.primal_residual);
        const std::size_t h = gap_history.size();
        if (h > 4 && stats.primal_residual > 1e3 * opts.eps_primal &&
            stats.primal_residual > 0.95 * gap_history[h - 5]) {
          stats.status = SolveStatus::kInfeasibleDetected;
          break;
        }
      }
    }
    if (iter > opts.max_iters) {
      iter = opts.max_iters;
      stats.status = SolveStatus::kIterationCap;
    }
  }
  stats.iterations = iter;
  stats.objective_value = c.dot(x);

  SteeringSolution sol;
  sol.grid = prog.grid();
  sol.stats = stats;
  sol.Sigma.reserve(N + 1);
  sol.U.reserve(N);
  sol.Y.reserve(N);
  for (std::size_t k = 0; k < N; ++k) {
    const Matrix M = prog.block(x, k);
    sol.Y.push_back(M.topLeftCorner(prog.m(), prog.m()));
    sol.U.push_back(M.bottomLeftCorner(prog.n(), prog.m()));
    sol.Sigma.push_back(k == 0 ? prog.Sigma0() : Matrix(M.bottomRightCorner(prog.n(), prog.n())));
  }
  sol.Sigma.push_back(prog.SigmaT());
  return sol;
}

/// max_k ‖Σ_{k+1} − euler_step(k, Σ_k, U_k)‖_F over the returned iterate.
inline double dynamics_residual(const DiscreteSteeringProgram& prog, const SteeringSolution& s) {
  double worst = 0.0;
  for (std::size_t k = 0; k < prog.intervals(); ++k)
    worst = std::max(worst, (s.Sigma[k + 1] - prog.euler_step(k, s.Sigma[k], s.U[k])).norm());
  return worst;
}

/// Smallest verify_lmi margin across all blocks.
inline double min_lmi_margin(const SteeringSolution& s) {
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < s.U.size(); ++k)
    worst = std::min(worst, verify_lmi(s.Y[k], s.U[k], s.Sigma[k]));
  return worst;
}

}  // namespace steer::sdp
