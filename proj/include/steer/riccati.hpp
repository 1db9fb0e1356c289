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

// Coupled matrix Riccati flows of the linear-quadratic Schrödinger system.
//
// With Gaussian factors φ = c·exp(−½xᵀΠx) and φ̂ = ĉ·exp(−½xᵀHx),
//
//   −Π̇ = AᵀΠ + ΠA − ΠBBᵀΠ + S,
//   −Ḣ = AᵀH + HA + HBBᵀH − S,
//   Π(0) + H(0) = Σ₀⁻¹,   Π(T) + H(T) = Σ_T⁻¹,
//
// and the optimal feedback is u = −BᵀΠ(t)x with state covariance
// Σ(t) = (Π(t) + H(t))⁻¹. Π and H are individually sign-indefinite in
// general. The split boundary conditions are solved by shooting on the free
// entries of Π(0): H(0) = Σ₀⁻¹ − Π(0) is implied, both flows are integrated
// forward, and a damped Newton iteration drives the terminal mismatch to
// zero. The default initial guess comes from the discretized convex program.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "steer/core_model.hpp"
#include "steer/errors.hpp"
#include "steer/linalg.hpp"
#include "steer/parallel.hpp"
#include "steer/sdp_steering.hpp"

namespace steer::riccati {

struct RiccatiOptions {
  double tol = 1e-6;        // Frobenius norm of the terminal mismatch
  int max_iters = 100;
  double blowup = 1e12;
  double fd_step = 1e-7;    // relative finite-difference step
  bool sdp_warm_start = true;
  std::size_t warm_start_intervals = 200;
  sdp::SolverOptions sdp;
  unsigned threads = 1;
};

struct Normalizers {
  std::vector<double> c;
  std::vector<double> chat;
};

struct RiccatiSolution {
  TimeGrid grid;
  std::vector<Matrix> Pi;
  std::vector<Matrix> H;
  std::vector<double> c;
  std::vector<double> chat;
  double residual = 0.0;
  int iterations = 0;

  /// Σ_k = (Π_k + H_k)⁻¹.
  CovariancePath covariance() const {
    std::vector<Matrix> S;
    S.reserve(Pi.size());
    for (std::size_t k = 0; k < Pi.size(); ++k) S.push_back(spd_inverse(Pi[k] + H[k], k, 0.0));
    return CovariancePath(grid, std::move(S));
  }

  /// K_k = BᵀΠ(t_k) on each interval.
  GainSchedule gains(const Matrix& B) const {
    std::vector<Matrix> K;
    K.reserve(grid.intervals());
    for (std::size_t k = 0; k < grid.intervals(); ++k) K.push_back(B.transpose() * Pi[k]);
    return GainSchedule(grid, std::move(K));
  }
};

namespace detail {

inline void guard(const Matrix& M, double t, double blowup, const char* which) {
  if (!M.allFinite() || M.cwiseAbs().maxCoeff() > blowup)
    throw EscapeTimeError(std::string(which) + " Riccati flow escaped at t = " + std::to_string(t), t);
}

/// dX/dt for Π (sign = −1) or H (sign = +1) written as
/// dX/dt = −(AᵀX + XA + sign·XBBᵀX − sign·S).
template <int Sign>
struct RiccatiRhs {
  const SteeringProblem& p;
  Matrix Q;
  explicit RiccatiRhs(const SteeringProblem& prob) : p(prob), Q(prob.BBt()) {}
  Matrix operator()(double t, const Matrix& X) const {
    const Matrix& A = p.A();
    return -(A.transpose() * X + X * A + double(Sign) * X * Q * X - double(Sign) * p.S(t));
  }
};

template <class Rhs>
std::vector<Matrix> integrate(const Rhs& rhs, const TimeGrid& g, const Matrix& X0, bool backward,
                              double blowup, const char* which) {
  if (!is_symmetric(X0, 1e-10 * (1.0 + X0.cwiseAbs().maxCoeff())))
    throw StructuralError(std::string(which) + " boundary value must be symmetric");
  const std::size_t N = g.intervals();
  std::vector<Matrix> out(N + 1);
  if (backward) {
    out[N] = symmetrize(X0);
    for (std::size_t k = N; k-- > 0;) {
      out[k] = symmetrize(steer::detail::rk4_step(rhs, g.t(k + 1), out[k + 1], -g.dt(k)));
      guard(out[k], g.t(k), blowup, which);
    }
  } else {
    out[0] = symmetrize(X0);
    for (std::size_t k = 0; k < N; ++k) {
      out[k + 1] = symmetrize(steer::detail::rk4_step(rhs, g.t(k), out[k], g.dt(k)));
      guard(out[k + 1], g.t(k + 1), blowup, which);
    }
  }
  return out;
}

/// Weighted half-vectorization whose Euclidean norm is the Frobenius norm.
inline Vector frobenius_vech(const Matrix& M) {
  Vector v = vech(M);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < M.rows(); ++j)
    for (Eigen::Index i = 0; i <= j; ++i, ++k)
      if (i != j) v(k) *= std::sqrt(2.0);
  return v;
}

}  // namespace detail

/// Backward RK4 for −Π̇ = AᵀΠ + ΠA − ΠBBᵀΠ + S from Π(T) = Pi_T.
inline std::vector<Matrix> integrate_pi_backward(const SteeringProblem& p, const TimeGrid& g,
                                                 const Matrix& Pi_T, double blowup = 1e12) {
  return detail::integrate(detail::RiccatiRhs<-1>(p), g, Pi_T, true, blowup, "Pi");
}

/// Same flow integrated forward in time from Π(0) = Pi_0.
inline std::vector<Matrix> integrate_pi_forward(const SteeringProblem& p, const TimeGrid& g,
                                                const Matrix& Pi_0, double blowup = 1e12) {
  return detail::integrate(detail::RiccatiRhs<-1>(p), g, Pi_0, false, blowup, "Pi");
}

/// Forward RK4 for Ḣ = −AᵀH − HA − HBBᵀH + S from H(0) = H_0.
inline std::vector<Matrix> integrate_h_forward(const SteeringProblem& p, const TimeGrid& g,
                                               const Matrix& H_0, double blowup = 1e12) {
  return detail::integrate(detail::RiccatiRhs<+1>(p), g, H_0, false, blowup, "H");
}

/// c_k = exp{½∫₀^{t_k} tr(BBᵀΠ)}, ĉ_k = exp{−∫₀^{t_k} tr(A + ½BBᵀH)},
/// cumulative trapezoid rule.
inline Normalizers normalizers(const RiccatiSolution& sol, const SteeringProblem& p) {
  const Matrix Q = p.BBt();
  const double trA = p.A().trace();
  const std::size_t n = sol.grid.size();
  Normalizers out;
  out.c.assign(n, 1.0);
  out.chat.assign(n, 1.0);
  double ic = 0.0, ih = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double h = sol.grid.dt(k);
    ic += 0.5 * h * ((Q * sol.Pi[k]).trace() + (Q * sol.Pi[k + 1]).trace());
    ih += 0.5 * h * (2.0 * trA + 0.5 * (Q * sol.H[k]).trace() + 0.5 * (Q * sol.H[k + 1]).trace());
    out.c[k + 1] = std::exp(0.5 * ic);
    out.chat[k + 1] = std::exp(-ih);
  }
  return out;
}

/// max_k ‖Σ_k⁻¹ − (Π_k + H_k)‖_F / ‖Σ_k⁻¹‖_F.
inline double consistency_residual(const RiccatiSolution& sol, const CovariancePath& path) {
  if (!(sol.grid == path.grid))
    throw StructuralError("consistency_residual: grids differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < path.Sigma.size(); ++k) {
    const Matrix inv = spd_inverse(path.Sigma[k], k, 1e-12);
    worst = std::max(worst, (inv - sol.Pi[k] - sol.H[k]).norm() / inv.norm());
  }
  return worst;
}

/// Estimate of Π(0) from a gain schedule assumed to satisfy K(t) ≈ BᵀΠ(t).
/// Stacks BᵀΠ₀ = K₀ with its time derivative,
///   (AB)ᵀΠ₀ = −K̇₀ − K₀A + K₀BK₀ − BᵀS(0),
/// and returns the minimum-norm least-squares symmetric solution.
inline Matrix estimate_pi0_from_gains(const SteeringProblem& p, const GainSchedule& gains) {
  const Eigen::Index n = p.n();
  const Eigen::Index m = p.m();
  const auto& K = gains.K;
  if (K.size() < 3) throw StructuralError("need at least three gains to estimate Pi(0)");
  const double h = gains.grid.dt(0);
  const Matrix Kdot = (-3.0 * K[0] + 4.0 * K[1] - K[2]) / (2.0 * h);
  const Matrix B = p.B();
  const Matrix AB = p.A() * B;
  const Matrix rhs1 = K[0];
  const Matrix rhs2 = -Kdot - K[0] * p.A() + K[0] * B * K[0] - B.transpose() * p.S(0.0);

  const Eigen::Index unknowns = n * (n + 1) / 2;
  const Eigen::Index eqs = 2 * m * n;
  Matrix L(eqs, unknowns);
  Vector r(eqs);
  r << Eigen::Map<const Vector>(rhs1.data(), m * n), Eigen::Map<const Vector>(rhs2.data(), m * n);
  for (Eigen::Index u = 0; u < unknowns; ++u) {
    const Matrix E = unvech(Vector::Unit(unknowns, u), n);
    const Matrix a = B.transpose() * E;
    const Matrix b = AB.transpose() * E;
    L.col(u) << Eigen::Map<const Vector>(a.data(), m * n), Eigen::Map<const Vector>(b.data(), m * n);
  }
  const Vector theta = L.completeOrthogonalDecomposition().solve(r);
  return unvech(theta, n);
}

namespace detail {

struct ShootingState {
  Vector theta;
  Vector residual;
  std::vector<Matrix> Pi, H;
};

inline ShootingState shoot(const SteeringProblem& p, const TimeGrid& g, const Matrix& Sigma0_inv,
                           const Matrix& SigmaT_inv, const Vector& theta, double blowup) {
  ShootingState s;
  s.theta = theta;
  const Matrix Pi0 = unvech(theta, p.n());
  s.Pi = integrate_pi_forward(p, g, Pi0, blowup);
  s.H = integrate_h_forward(p, g, Sigma0_inv - Pi0, blowup);
  s.residual = frobenius_vech(s.Pi.back() + s.H.back() - SigmaT_inv);
  return s;
}

}  // namespace detail

/// Solves the split-boundary system on grid `g`. Without `init`, Π(0) is
/// estimated from the gains of the discretized convex program.
inline RiccatiSolution solve_coupled(const SteeringProblem& p, const TimeGrid& g,
                                     std::optional<Matrix> init = std::nullopt,
                                     const RiccatiOptions& opts = {}) {
  const auto report = validate_problem(p, g);
  if (!report.passed()) {
    std::string failed;
    for (const auto& c : report.checks)
      if (!c.passed) failed += " " + c.name;
    throw ValidationError("problem failed validation:" + failed);
  }
  const Eigen::Index n = p.n();
  if (init && (init->rows() != n || init->cols() != n))
    throw StructuralError("initial Pi(0) guess has the wrong size");
  const Matrix Sigma0_inv = spd_inverse(p.Sigma0());
  const Matrix SigmaT_inv = spd_inverse(p.SigmaT());

  Matrix guess;
  if (init) {
    guess = symmetrize(*init);
  } else if (opts.sdp_warm_start) {
    const auto sdp_sol = sdp::solve(sdp::discretize(p, opts.warm_start_intervals), opts.sdp);
    guess = estimate_pi0_from_gains(p, sdp_sol.gains());
  } else {
    guess = 0.5 * Sigma0_inv;
  }

  detail::ShootingState cur;
  try {
    cur = detail::shoot(p, g, Sigma0_inv, SigmaT_inv, vech(guess), opts.blowup);
  } catch (const EscapeTimeError& e) {
    throw ConvergenceError(std::string("initial shooting guess diverged: ") + e.what(),
                           std::numeric_limits<double>::infinity(), 0);
  }

  const Eigen::Index dim = cur.theta.size();
  int iter = 0;
  for (; iter < opts.max_iters && cur.residual.norm() > opts.tol; ++iter) {
    Matrix J(dim, dim);
    std::vector<Vector> cols(static_cast<std::size_t>(dim));
    parallel_for(
        static_cast<std::size_t>(dim),
        [&](std::size_t j) {
          Vector th = cur.theta;
          const double step = opts.fd_step * std::max(1.0, std::abs(th(Eigen::Index(j))));
          th(Eigen::Index(j)) += step;
          try {
            cols[j] = (detail::shoot(p, g, Sigma0_inv, SigmaT_inv, th, opts.blowup).residual -
                       cur.residual) / step;
          } catch (const EscapeTimeError&) {
            th(Eigen::Index(j)) -= 2.0 * step;
            cols[j] = (cur.residual -
                       detail::shoot(p, g, Sigma0_inv, SigmaT_inv, th, opts.blowup).residual) / step;
          }
        },
        opts.threads);
    for (Eigen::Index j = 0; j < dim; ++j) J.col(j) = cols[static_cast<std::size_t>(j)];
    const Vector delta = -J.colPivHouseholderQr().solve(cur.residual);

    // Damped step: trials that blow up or fail to reduce the residual are
    // halved.
    double alpha = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40 && !accepted; ++halving, alpha *= 0.5) {
      try {
        auto trial = detail::shoot(p, g, Sigma0_inv, SigmaT_inv, cur.theta + alpha * delta, opts.blowup);
        if (trial.residual.norm() < (1.0 - 1e-4 * alpha) * cur.residual.norm()) {
          cur = std::move(trial);
          accepted = true;
        }
      } catch (const EscapeTimeError&) {
      }
    }
    if (!accepted) break;
  }
  const double res = cur.residual.norm();
  if (!(res <= opts.tol)) {
    char msg[96];
    std::snprintf(msg, sizeof msg, "coupled Riccati shooting did not converge (residual %.3g)", res);
    throw ConvergenceError(msg, res, iter);
  }

  RiccatiSolution sol;
  sol.grid = g;
  sol.Pi = std::move(cur.Pi);
  sol.H = std::move(cur.H);
  sol.residual = res;
  sol.iterations = iter;
  auto nz = normalizers(sol, p);
  sol.c = std::move(nz.c);
  sol.chat = std::move(nz.chat);
  return sol;
}

/// Runs the shooting solver from every guess and keeps the distinct roots
/// (Π(0) differing by more than `distinct_tol` in Frobenius norm). Starts
/// that diverge or fail to converge are skipped.
inline std::vector<RiccatiSolution> find_coupled_roots(const SteeringProblem& p, const TimeGrid& g,
                                                       const std::vector<Matrix>& starts,
                                                       const RiccatiOptions& opts = {},
                                                       double distinct_tol = 1e-5) {
  std::vector<RiccatiSolution> roots;
  for (const auto& s : starts) {
    try {
      auto sol = solve_coupled(p, g, s, opts);
      const bool seen = std::any_of(roots.begin(), roots.end(), [&](const RiccatiSolution& r) {
        return (r.Pi.front() - sol.Pi.front()).norm() <= distinct_tol * (1.0 + r.Pi.front().norm());
      });
      if (!seen) roots.push_back(std::move(sol));
    } catch (const ConvergenceError&) {
    }
  }
  return roots;
}

}  // namespace steer::riccati
