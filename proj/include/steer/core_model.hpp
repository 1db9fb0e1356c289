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

// Problem data for linear covariance steering with a quadratic loss, the
// time grid shared by every discretized module, and the reference
// quantities computed directly from the model: covariance flows under a
// given feedback and the quadratic cost of a gain schedule.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "steer/errors.hpp"
#include "steer/linalg.hpp"

namespace steer {

class TimeGrid {
 public:
  TimeGrid() = default;

  static TimeGrid uniform(double horizon, std::size_t intervals) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
      throw StructuralError("time grid horizon must be positive and finite");
    if (intervals == 0)
      throw StructuralError("time grid needs at least one interval");
    std::vector<double> pts(intervals + 1);
    for (std::size_t k = 0; k <= intervals; ++k)
      pts[k] = horizon * static_cast<double>(k) / static_cast<double>(intervals);
    pts.back() = horizon;
    TimeGrid g;
    g.points_ = std::move(pts);
    g.uniform_ = true;
    return g;
  }

  /// Arbitrary strictly increasing sample instants starting at 0.
  static TimeGrid from_points(std::vector<double> points) {
    if (points.size() < 2)
      throw StructuralError("time grid needs at least two points");
    if (points.front() != 0.0)
      throw StructuralError("time grid must start at t = 0");
    for (std::size_t k = 1; k < points.size(); ++k) {
      if (!(points[k] > points[k - 1]) || !std::isfinite(points[k]))
        throw StructuralError("time grid points must be strictly increasing");
    }
    TimeGrid g;
    g.points_ = std::move(points);
    double sum = 0.0;
    for (std::size_t k = 0; k < g.intervals(); ++k) sum += g.dt(k);
    if (std::abs(sum - g.horizon()) > 1e-12 * g.horizon())
      throw StructuralError("time grid widths do not sum to the horizon");
    g.uniform_ = true;
    for (std::size_t k = 1; k < g.intervals(); ++k)
      if (std::abs(g.dt(k) - g.dt(0)) > 1e-12 * g.horizon()) g.uniform_ = false;
    return g;
  }

  std::size_t intervals() const { return points_.empty() ? 0 : points_.size() - 1; }
  std::size_t size() const { return points_.size(); }
  double t(std::size_t k) const { return points_[k]; }
  double dt(std::size_t k) const { return points_[k + 1] - points_[k]; }
  double horizon() const { return points_.back(); }
  bool is_uniform() const { return uniform_; }
  const std::vector<double>& points() const { return points_; }

  /// Interval index k with t_k ≤ t < t_{k+1}; t = T maps to the last interval.
  std::size_t interval_of(double t) const {
    if (t <= points_.front()) return 0;
    if (t >= points_.back()) return intervals() - 1;
    auto it = std::upper_bound(points_.begin(), points_.end(), t);
    return static_cast<std::size_t>(it - points_.begin()) - 1;
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.points_ == b.points_;
  }

 private:
  std::vector<double> points_;
  bool uniform_ = false;
};

/// Loss weight S(t). Either a constant matrix or samples on a grid,
/// linearly interpolated between sample instants.
class LossWeight {
 public:
  LossWeight() = default;

  static LossWeight constant(Matrix S) {
    LossWeight w;
    w.samples_.push_back(std::move(S));
    return w;
  }

  static LossWeight sampled(TimeGrid grid, std::vector<Matrix> samples) {
    if (samples.size() != grid.size())
      throw StructuralError("loss weight needs one sample per grid point");
    for (const auto& s : samples)
      if (s.rows() != samples.front().rows() || !is_square(s))
        throw StructuralError("loss weight samples must be square and equal-sized");
    LossWeight w;
    w.grid_ = std::move(grid);
    w.samples_ = std::move(samples);
    return w;
  }

  bool is_constant() const { return !grid_.has_value(); }
  Eigen::Index dim() const { return samples_.empty() ? 0 : samples_.front().rows(); }
  const std::vector<Matrix>& samples() const { return samples_; }
  const std::optional<TimeGrid>& grid() const { return grid_; }

  Matrix at(double t) const {
    if (!grid_) return samples_.front();
    const std::size_t k = grid_->interval_of(t);
    const double w = std::clamp((t - grid_->t(k)) / grid_->dt(k), 0.0, 1.0);
    return (1.0 - w) * samples_[k] + w * samples_[k + 1];
  }

 private:
  std::optional<TimeGrid> grid_;
  std::vector<Matrix> samples_;
};

/// dX = AX dt + B u dt + B dw on [0, T] with X(0) ~ N(0, Σ₀), target
/// covariance Σ_T and loss ½ x′S(t)x.
class SteeringProblem {
 public:
  SteeringProblem(Matrix A, Matrix B, LossWeight S, Matrix Sigma0,
                  Matrix SigmaT, double T)
      : A_(std::move(A)),
        B_(std::move(B)),
        S_(std::move(S)),
        Sigma0_(std::move(Sigma0)),
        SigmaT_(std::move(SigmaT)),
        T_(T) {
    const Eigen::Index n = A_.rows();
    if (n == 0 || !is_square(A_))
      throw StructuralError("A must be a non-empty square matrix");
    if (B_.rows() != n || B_.cols() == 0)
      throw StructuralError("B must have n rows and at least one column");
    if (S_.dim() != n) throw StructuralError("S must be n x n");
    if (Sigma0_.rows() != n || !is_square(Sigma0_))
      throw StructuralError("Sigma0 must be n x n");
    if (SigmaT_.rows() != n || !is_square(SigmaT_))
      throw StructuralError("SigmaT must be n x n");
    if (!(T_ > 0.0) || !std::isfinite(T_))
      throw StructuralError("horizon T must be positive");
    if (S_.grid() && std::abs(S_.grid()->horizon() - T_) > 1e-12 * T_)
      throw StructuralError("sampled S must span [0, T]");
    for (const Matrix* M : {&A_, &B_, &Sigma0_, &SigmaT_})
      if (!all_finite(*M)) throw StructuralError("problem data must be finite");
  }

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const LossWeight& S() const { return S_; }
  Matrix S(double t) const { return S_.at(t); }
  const Matrix& Sigma0() const { return Sigma0_; }
  const Matrix& SigmaT() const { return SigmaT_; }
  double T() const { return T_; }
  Eigen::Index n() const { return A_.rows(); }
  Eigen::Index m() const { return B_.cols(); }
  Matrix BBt() const { return B_ * B_.transpose(); }

 private:
  Matrix A_;
  Matrix B_;
  LossWeight S_;
  Matrix Sigma0_;
  Matrix SigmaT_;
  double T_;
};

struct ValidationCheck {
  std::string name;
  bool passed = false;
  double margin = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  Eigen::Index controllability_rank = 0;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const ValidationCheck& c) { return c.passed; });
  }
  const ValidationCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

inline constexpr double kControllabilityRelTol = 1e-8;

/// Well-posedness checks. S is tested at every point of `grid`.
inline ValidationReport validate_problem(const SteeringProblem& p,
                                         const TimeGrid& grid) {
  ValidationReport r;
  auto definiteness = [&](const std::string& name, const DefinitenessCheck& c) {
    r.checks.push_back({name, c.ok, c.margin,
                        "min eigenvalue " + std::to_string(c.margin)});
  };
  definiteness("spd_sigma0", check_spd(p.Sigma0()));
  definiteness("spd_sigmaT", check_spd(p.SigmaT()));

  ValidationCheck s{"psd_S", true, 0.0, ""};
  bool first = true;
  for (double t : grid.points()) {
    const auto c = check_psd(p.S(t));
    if (first || c.margin < s.margin) s.margin = c.margin;
    first = false;
    if (!c.ok && s.passed) {
      s.passed = false;
      s.detail = "S(t) not PSD at t = " + std::to_string(t);
    }
  }
  if (s.passed) s.detail = "min eigenvalue over samples " + std::to_string(s.margin);
  r.checks.push_back(s);

  const Eigen::Index brank = numerical_rank(p.B(), kControllabilityRelTol);
  r.checks.push_back({"B_full_column_rank", brank == p.m(),
                      static_cast<double>(brank - p.m()),
                      "rank " + std::to_string(brank) + " of " +
                          std::to_string(p.m())});

  r.controllability_rank =
      numerical_rank(controllability_matrix(p.A(), p.B()), kControllabilityRelTol);
  r.checks.push_back({"controllability_rank", r.controllability_rank == p.n(),
                      static_cast<double>(r.controllability_rank - p.n()),
                      "rank " + std::to_string(r.controllability_rank) + " of " +
                          std::to_string(p.n())});
  return r;
}

/// Same checks on the natural sample set of S (its own grid, or {0, T}).
inline ValidationReport validate_problem(const SteeringProblem& p) {
  if (p.S().grid()) return validate_problem(p, *p.S().grid());
  return validate_problem(p, TimeGrid::uniform(p.T(), 1));
}

struct CovariancePath {
  TimeGrid grid;
  std::vector<Matrix> Sigma;

  CovariancePath() = default;
  CovariancePath(TimeGrid g, std::vector<Matrix> s)
      : grid(std::move(g)), Sigma(std::move(s)) {
    if (Sigma.size() != grid.size())
      throw StructuralError("covariance path needs one matrix per grid point");
  }

  /// Largest violation of the symmetric-PSD invariant, ≤ 0 when it holds.
  double invariant_violation() const {
    double worst = -1.0;
    for (const auto& S : Sigma) {
      worst = std::max(worst, (S - S.transpose()).cwiseAbs().maxCoeff() - 1e-10);
      worst = std::max(worst, -min_eigenvalue(S) - 1e-10);
    }
    return worst;
  }
};

/// Feedback u = −K_k x on [t_k, t_{k+1}).
struct GainSchedule {
  TimeGrid grid;
  std::vector<Matrix> K;

  GainSchedule() = default;
  GainSchedule(TimeGrid g, std::vector<Matrix> k) : grid(std::move(g)), K(std::move(k)) {
    if (K.size() != grid.intervals())
      throw StructuralError("gain schedule needs one gain per interval");
    for (const auto& Kk : K) {
      if (!all_finite(Kk)) throw StructuralError("gain schedule has non-finite entries");
      if (Kk.rows() != K.front().rows() || Kk.cols() != K.front().cols())
        throw StructuralError("gain schedule entries must share a shape");
    }
  }

  const Matrix& at(double t) const { return K[grid.interval_of(t)]; }

  static GainSchedule zero(const TimeGrid& g, Eigen::Index m, Eigen::Index n) {
    return GainSchedule(g, std::vector<Matrix>(g.intervals(), Matrix::Zero(m, n)));
  }
};

namespace detail {

template <class Rhs>
Matrix rk4_step(const Rhs& f, double t, const Matrix& X, double h) {
  const Matrix k1 = f(t, X);
  const Matrix k2 = f(t + 0.5 * h, X + 0.5 * h * k1);
  const Matrix k3 = f(t + 0.5 * h, X + 0.5 * h * k2);
  const Matrix k4 = f(t + h, X + h * k3);
  return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Σ̇ = AΣ + ΣA′ + BB′ from Σ(0) = Σ₀, classical RK4 on g.
inline CovariancePath uncontrolled_covariance(const SteeringProblem& p,
                                              const TimeGrid& g) {
  const Matrix& A = p.A();
  const Matrix Q = p.BBt();
  auto rhs = [&](double, const Matrix& S) -> Matrix {
    return A * S + S * A.transpose() + Q;
  };
  std::vector<Matrix> out;
  out.reserve(g.size());
  out.push_back(symmetrize(p.Sigma0()));
  for (std::size_t k = 0; k < g.intervals(); ++k)
    out.push_back(symmetrize(detail::rk4_step(rhs, g.t(k), out.back(), g.dt(k))));
  return CovariancePath(g, std::move(out));
}

enum class LyapunovScheme {
  kEuler,         ///< Σ⁺ = Σ + dt·(A_cl Σ + Σ A_clᵀ + BBᵀ); the SDP's own discretization
  kRk4,           ///< continuous flow under piecewise-constant gains
  kSampledChain,  ///< exact second moment of the Euler–Maruyama chain
};

/// Covariance under u = −K(t)x with K piecewise constant on the gain grid.
inline CovariancePath closed_loop_covariance(const SteeringProblem& p,
                                             const GainSchedule& gains,
                                             LyapunovScheme scheme) {
  const TimeGrid& g = gains.grid;
  if (gains.K.front().rows() != p.m() || gains.K.front().cols() != p.n())
    throw StructuralError("gain shape does not match the problem");
  const Matrix Q = p.BBt();
  const Eigen::Index n = p.n();
  std::vector<Matrix> out;
  out.reserve(g.size());
  out.push_back(symmetrize(p.Sigma0()));
  for (std::size_t k = 0; k < g.intervals(); ++k) {
    const Matrix Acl = p.A() - p.B() * gains.K[k];
    const double h = g.dt(k);
    const Matrix& S = out.back();
    Matrix next;
    switch (scheme) {
      case LyapunovScheme::kEuler:
        next = S + h * (Acl * S + S * Acl.transpose() + Q);
        break;
      case LyapunovScheme::kRk4: {
        auto rhs = [&](double, const Matrix& X) -> Matrix {
          return Acl * X + X * Acl.transpose() + Q;
        };
        next = detail::rk4_step(rhs, g.t(k), S, h);
        break;
      }
      case LyapunovScheme::kSampledChain: {
        const Matrix F = Matrix::Identity(n, n) + h * Acl;
        next = F * S * F.transpose() + h * Q;
        break;
      }
    }
    out.push_back(symmetrize(next));
  }
  return CovariancePath(g, std::move(out));
}

/// ½ Σ_k [tr(K_k Σ_k K_kᵀ) + tr(S(t_k) Σ_k)]·dt_k.
inline double cost_functional(const SteeringProblem& p, const GainSchedule& k,
                              const CovariancePath& c) {
  if (!(k.grid == c.grid))
    throw StructuralError("gain schedule and covariance path use different grids");
  double J = 0.0;
  for (std::size_t i = 0; i < k.grid.intervals(); ++i) {
    const Matrix& S = c.Sigma[i];
    const double running = (k.K[i] * S * k.K[i].transpose()).trace() +
                           (p.S(k.grid.t(i)) * S).trace();
    J += 0.5 * running * k.grid.dt(i);
  }
  return J;
}

}  // namespace steer
