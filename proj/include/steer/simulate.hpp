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

// Monte Carlo sampling of the closed-loop linear SDE
//
//   dX = (A − BK(t))X dt + B dw,   X(0) ~ N(0, Σ₀),
//
// by Euler–Maruyama. Path i draws from its own mt19937_64 seeded with
// (seed, i), so ensembles do not depend on the worker count.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "steer/core_model.hpp"
#include "steer/errors.hpp"
#include "steer/linalg.hpp"
#include "steer/parallel.hpp"

namespace steer::sim {

/// States and controls at every grid time; the control at t_N uses the
/// last interval's gain.
struct Trajectory {
  TimeGrid grid;
  std::vector<Vector> states;
  std::vector<Vector> controls;
};

struct SimulationOptions {
  std::size_t substeps = 1;  // Euler–Maruyama steps per grid interval
  unsigned threads = thread_count();
};

namespace detail {

inline std::mt19937_64 path_engine(std::uint64_t seed, std::size_t path) {
  const auto p = static_cast<std::uint64_t>(path);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(p >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

inline std::vector<Trajectory> sample_paths(const SteeringProblem& p, const GainSchedule& gains,
                                            std::size_t count, std::uint64_t seed,
                                            const SimulationOptions& opts = {}) {
  const TimeGrid& g = gains.grid;
  const Eigen::Index n = p.n(), m = p.m();
  if (std::abs(g.horizon() - p.T()) > 1e-12 * p.T())
    throw StructuralError("gain schedule horizon does not match the problem");
  for (const auto& K : gains.K)
    if (K.rows() != m || K.cols() != n) throw StructuralError("gain has the wrong shape");
  if (opts.substeps < 1) throw StructuralError("substeps must be at least 1");

  Eigen::LLT<Matrix> llt(p.Sigma0());
  if (llt.info() != Eigen::Success) throw StructuralError("Sigma0 is not positive definite");
  const Matrix L = llt.matrixL();
  const Matrix& A = p.A();
  const Matrix& B = p.B();
  const std::size_t N = g.intervals();

  std::vector<Trajectory> out(count);
  parallel_for(
      count,
      [&](std::size_t i) {
        auto rng = detail::path_engine(seed, i);
        std::normal_distribution<double> z;
        auto draw = [&](Eigen::Index d) {
          Vector v(d);
          for (Eigen::Index j = 0; j < d; ++j) v(j) = z(rng);
          return v;
        };
        Trajectory tr{g, {}, {}};
        tr.states.reserve(N + 1);
        tr.controls.reserve(N + 1);
        Vector x = L * draw(n);
        tr.states.push_back(x);
        for (std::size_t k = 0; k < N; ++k) {
          const Matrix& K = gains.K[k];
          tr.controls.push_back(-K * x);
          const double h = g.dt(k) / static_cast<double>(opts.substeps);
          const double sh = std::sqrt(h);
          const Matrix F = A - B * K;
          for (std::size_t s = 0; s < opts.substeps; ++s) x += h * (F * x) + sh * (B * draw(m));
          tr.states.push_back(x);
        }
        tr.controls.push_back(N > 0 ? Vector(-gains.K.back() * x) : Vector::Zero(m));
        out[i] = std::move(tr);
      },
      opts.threads);
  return out;
}

namespace detail {

inline void check_ensemble(const std::vector<Trajectory>& trajs, std::size_t k, std::size_t min_count) {
  if (trajs.size() < min_count)
    throw StructuralError("ensemble needs at least " + std::to_string(min_count) + " paths");
  for (const auto& t : trajs)
    if (k >= t.states.size()) throw StructuralError("time index outside the trajectory");
}

}  // namespace detail

inline Vector empirical_mean(const std::vector<Trajectory>& trajs, std::size_t k) {
  detail::check_ensemble(trajs, k, 1);
  Vector mu = Vector::Zero(trajs.front().states[k].size());
  for (const auto& t : trajs) mu += t.states[k];
  return mu / static_cast<double>(trajs.size());
}

/// Unbiased sample covariance (divisor count − 1) at grid index k.
inline Matrix empirical_covariance(const std::vector<Trajectory>& trajs, std::size_t k) {
  detail::check_ensemble(trajs, k, 2);
  const Vector mu = empirical_mean(trajs, k);
  Matrix C = Matrix::Zero(mu.size(), mu.size());
  for (const auto& t : trajs) {
    const Vector d = t.states[k] - mu;
    C.noalias() += d * d.transpose();
  }
  return symmetrize(C / static_cast<double>(trajs.size() - 1));
}

struct CostEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::vector<double> samples;
};

/// Per-path left-endpoint quadrature of ½‖K_kX_k‖² + ½X_kᵀS(t_k)X_k, then
/// ensemble mean and standard error (sample std / √count).
inline CostEstimate estimate_cost(const std::vector<Trajectory>& trajs, const GainSchedule& gains,
                                  const LossWeight& S) {
  detail::check_ensemble(trajs, 0, 1);
  const TimeGrid& g = gains.grid;
  CostEstimate est;
  est.samples.reserve(trajs.size());
  for (const auto& t : trajs) {
    if (!(t.grid == g)) throw StructuralError("trajectory grid differs from the gain grid");
    double c = 0.0;
    for (std::size_t k = 0; k < g.intervals(); ++k) {
      const Vector& x = t.states[k];
      c += 0.5 * g.dt(k) * ((gains.K[k] * x).squaredNorm() + x.dot(S.at(g.t(k)) * x));
    }
    est.samples.push_back(c);
  }
  const double cnt = static_cast<double>(est.samples.size());
  for (double c : est.samples) est.mean += c;
  est.mean /= cnt;
  if (est.samples.size() > 1) {
    double var = 0.0;
    for (double c : est.samples) var += (c - est.mean) * (c - est.mean);
    var /= cnt - 1.0;
    est.standard_error = std::sqrt(var / cnt);
  }
  return est;
}

/// Entrywise bootstrap standard error of the empirical covariance at index k.
inline Matrix bootstrap_covariance_se(const std::vector<Trajectory>& trajs, std::size_t k,
                                      std::size_t resamples = 100, std::uint64_t seed = 0) {
  detail::check_ensemble(trajs, k, 2);
  if (resamples < 2) throw StructuralError("bootstrap needs at least two resamples");
  const Eigen::Index n = trajs.front().states[k].size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, trajs.size() - 1);
  Matrix sum = Matrix::Zero(n, n), sum2 = Matrix::Zero(n, n);
  std::vector<Trajectory> boot(trajs.size());
  for (std::size_t r = 0; r < resamples; ++r) {
    Vector mu = Vector::Zero(n);
    std::vector<std::size_t> idx(trajs.size());
    for (auto& i : idx) {
      i = pick(rng);
      mu += trajs[i].states[k];
    }
    mu /= static_cast<double>(idx.size());
    Matrix C = Matrix::Zero(n, n);
    for (std::size_t i : idx) {
      const Vector d = trajs[i].states[k] - mu;
      C.noalias() += d * d.transpose();
    }
    C /= static_cast<double>(idx.size() - 1);
    sum += C;
    sum2 += C.cwiseProduct(C);
  }
  const double R = static_cast<double>(resamples);
  const Matrix var = (sum2 - sum.cwiseProduct(sum) / R) / (R - 1.0);
  return var.cwiseMax(0.0).cwiseSqrt();
}

struct EnsembleStats {
  std::vector<Vector> mean;
  std::vector<Matrix> covariance;
  double cost_mean = 0.0;
  double cost_standard_error = 0.0;
  std::uint64_t seed = 0;
  std::size_t count = 0;
};

inline EnsembleStats summarize(const std::vector<Trajectory>& trajs, const GainSchedule& gains,
                               const LossWeight& S, std::uint64_t seed) {
  detail::check_ensemble(trajs, 0, 2);
  EnsembleStats st;
  st.seed = seed;
  st.count = trajs.size();
  for (std::size_t k = 0; k < gains.grid.size(); ++k) {
    st.mean.push_back(empirical_mean(trajs, k));
    st.covariance.push_back(empirical_covariance(trajs, k));
  }
  const auto c = estimate_cost(trajs, gains, S);
  st.cost_mean = c.mean;
  st.cost_standard_error = c.standard_error;
  return st;
}

}  // namespace steer::sim
