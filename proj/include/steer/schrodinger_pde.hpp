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

// Generalized Schrödinger system on tensor grids.
//
//   ∂φ/∂t + f·∇φ + ½ Σ a_ij ∂²φ/∂x_i∂x_j = Vφ            (backward)
//   ∂φ̂/∂t + ∇·(fφ̂) − ½ Σ ∂²(a_ij φ̂)/∂x_i∂x_j = −Vφ̂     (forward)
//   φ(·,0)φ̂(·,0) = ρ₀,  φ(·,T)φ̂(·,T) = ρ_T
//
// Space is discretized as a continuous-time Markov chain on the mesh nodes:
// neighbour jump rates a/(2h²) ± drift terms, reflecting at the edges, so
// every generator row sums to zero. One interval of length dt uses the
// transition matrix
//
//   P = D^½ (I + dt·Q) D^½,   D = diag(exp(−V·dt)),
//
// with the backward step φ ← Pφ and the forward step ρ ← Pᵀρ. The forward
// operator is the exact transpose of the backward one, so ⟨φ_k, φ̂_k⟩ is
// constant in k up to rounding.
//
// Drift uses centered differences where the cell Péclet number |f|h/a is at
// most one and upwind differences elsewhere (DriftStencil::kHybrid); pure
// upwinding is available as DriftStencil::kUpwind.
//
// Supported shapes: n = 1, or n = 2 with diagonal a (the inertial-particle
// case a = diag(0, σ²)).

#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "steer/core_model.hpp"
#include "steer/errors.hpp"
#include "steer/linalg.hpp"
#include "steer/parallel.hpp"

namespace steer::pde {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline constexpr double kPositivityFloor = 1e-300;

/// Node-centred rectangular mesh in one or two dimensions. Node (i0, i1) has
/// flat index i0 + count(0)·i1.
class Mesh {
 public:
  struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t count = 3;
  };

  Mesh() = default;

  static Mesh line(double lo, double hi, std::size_t count) { return Mesh({Axis{lo, hi, count}}); }
  static Mesh rectangle(Axis x, Axis y) { return Mesh({x, y}); }

  std::size_t dims() const { return axes_.size(); }
  std::size_t count(std::size_t d) const { return axes_.at(d).count; }
  double lo(std::size_t d) const { return axes_.at(d).lo; }
  double hi(std::size_t d) const { return axes_.at(d).hi; }
  double spacing(std::size_t d) const {
    return (axes_.at(d).hi - axes_.at(d).lo) / static_cast<double>(axes_.at(d).count - 1);
  }
  double min_spacing() const {
    double h = spacing(0);
    for (std::size_t d = 1; d < dims(); ++d) h = std::min(h, spacing(d));
    return h;
  }
  std::size_t nodes() const {
    std::size_t c = 1;
    for (const auto& a : axes_) c *= a.count;
    return c;
  }
  std::size_t stride(std::size_t d) const { return d == 0 ? 1 : axes_[0].count; }
  double cell_volume() const {
    double v = 1.0;
    for (std::size_t d = 0; d < dims(); ++d) v *= spacing(d);
    return v;
  }
  double coordinate(std::size_t d, std::size_t i) const {
    return lo(d) + spacing(d) * static_cast<double>(i);
  }
  std::size_t axis_index(std::size_t node, std::size_t d) const {
    return d == 0 ? node % axes_[0].count : node / axes_[0].count;
  }
  Vector point(std::size_t node) const {
    Vector x(static_cast<Eigen::Index>(dims()));
    for (std::size_t d = 0; d < dims(); ++d)
      x(Eigen::Index(d)) = coordinate(d, axis_index(node, d));
    return x;
  }
  /// Σ v_i · cell volume.
  double integrate(const Vector& v) const { return v.sum() * cell_volume(); }

 private:
  explicit Mesh(std::vector<Axis> axes) : axes_(std::move(axes)) {
    for (const auto& a : axes_) {
      if (a.count < 3) throw StructuralError("mesh axes need at least three nodes");
      if (!(a.hi > a.lo) || !std::isfinite(a.lo) || !std::isfinite(a.hi))
        throw StructuralError("mesh axis bounds must be finite with hi > lo");
    }
  }

  std::vector<Axis> axes_;
};

enum class FieldKind { kDensity, kFactor };

/// Nodal values at every grid time.
struct Field {
  FieldKind kind = FieldKind::kDensity;
  std::vector<Vector> values;

  std::size_t times() const { return values.size(); }
  const Vector& at(std::size_t k) const { return values.at(k); }
};

using DriftFn = std::function<Vector(const Vector& x, double t)>;
using DiffusionFn = std::function<Matrix(const Vector& x, double t)>;
using KillingFn = std::function<double(const Vector& x, double t)>;

enum class DriftStencil { kUpwind, kHybrid };

namespace detail {

/// Markov generator for drift (n × nodes) and diagonal diffusion
/// (n × nodes).
inline SparseMatrix generator(const Mesh& mesh, const Matrix& drift, const Matrix& adiag,
                              DriftStencil stencil) {
  const std::size_t nodes = mesh.nodes();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(nodes * (2 * mesh.dims() + 1));
  for (std::size_t i = 0; i < nodes; ++i) {
    double out = 0.0;
    for (std::size_t d = 0; d < mesh.dims(); ++d) {
      const double f = drift(Eigen::Index(d), Eigen::Index(i));
      const double a = adiag(Eigen::Index(d), Eigen::Index(i));
      const double h = mesh.spacing(d);
      const double diff = a / (2.0 * h * h);
      double up, dn;
      if (stencil == DriftStencil::kHybrid && std::abs(f) * h <= a) {
        up = diff + f / (2.0 * h);
        dn = diff - f / (2.0 * h);
      } else {
        up = diff + std::max(f, 0.0) / h;
        dn = diff + std::max(-f, 0.0) / h;
      }
      const std::size_t id = mesh.axis_index(i, d);
      const std::size_t s = mesh.stride(d);
      if (id + 1 < mesh.count(d) && up > 0.0) {
        trip.emplace_back(Eigen::Index(i), Eigen::Index(i + s), up);
        out += up;
      }
      if (id > 0 && dn > 0.0) {
        trip.emplace_back(Eigen::Index(i), Eigen::Index(i - s), dn);
        out += dn;
      }
    }
    trip.emplace_back(Eigen::Index(i), Eigen::Index(i), -out);
  }
  SparseMatrix Q(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(nodes));
  Q.setFromTriplets(trip.begin(), trip.end());
  return Q;
}

inline double max_exit_rate(const SparseMatrix& Q) {
  double r = 0.0;
  for (Eigen::Index i = 0; i < Q.outerSize(); ++i) r = std::max(r, -Q.coeff(i, i));
  return r;
}

/// Largest dt allowed by dt ≤ min(h²/(2·max‖a‖), h/max‖f‖) and by
/// nonnegativity of I + dt·Q.
inline double stable_step(const Mesh& mesh, const Matrix& drift, const Matrix& adiag,
                          const SparseMatrix& Q) {
  const double h = mesh.min_spacing();
  double amax = 0.0, fmax = 0.0;
  for (Eigen::Index i = 0; i < drift.cols(); ++i) {
    amax = std::max(amax, adiag.col(i).maxCoeff());
    fmax = std::max(fmax, drift.col(i).norm());
  }
  double limit = std::numeric_limits<double>::infinity();
  if (amax > 0.0) limit = std::min(limit, h * h / (2.0 * amax));
  if (fmax > 0.0) limit = std::min(limit, h / fmax);
  const double r = max_exit_rate(Q);
  if (r > 0.0) limit = std::min(limit, 1.0 / r);
  return limit;
}

}  // namespace detail

/// Drift, diffusion channel and killing rate sampled on mesh × time.
class GridModel {
 public:
  GridModel(Mesh mesh, TimeGrid grid, const DriftFn& f, const DiffusionFn& sigma,
            const KillingFn& V = {}, DriftStencil stencil = DriftStencil::kHybrid)
      : mesh_(std::move(mesh)), grid_(std::move(grid)), stencil_(stencil) {
    const std::size_t n = mesh_.dims();
    const std::size_t nodes = mesh_.nodes();
    const auto ni = Eigen::Index(n);
    if (n != 1 && n != 2) throw StructuralError("grid models support one or two dimensions");
    if (!f || !sigma) throw StructuralError("drift and diffusion callables are required");
    const Matrix s0 = sigma(mesh_.point(0), 0.0);
    if (s0.rows() != ni) throw StructuralError("sigma must have one row per state dimension");
    m_ = static_cast<std::size_t>(s0.cols());
    if (m_ > 1) throw StructuralError("grid models support at most one noise channel");
    const auto mi = Eigen::Index(m_);

    drift_.resize(grid_.size());
    adiag_.resize(grid_.size());
    sigma_.resize(grid_.size());
    killing_.resize(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) {
      const double t = grid_.t(k);
      drift_[k].resize(ni, Eigen::Index(nodes));
      adiag_[k].resize(ni, Eigen::Index(nodes));
      sigma_[k].resize(ni * mi, Eigen::Index(nodes));
      killing_[k].resize(Eigen::Index(nodes));
      for (std::size_t i = 0; i < nodes; ++i) {
        const Vector x = mesh_.point(i);
        const Vector fx = f(x, t);
        const Matrix sx = sigma(x, t);
        const double vx = V ? V(x, t) : 0.0;
        if (fx.size() != ni) throw StructuralError("drift must return an n-vector");
        if (sx.rows() != ni || sx.cols() != mi)
          throw StructuralError("sigma must keep the same n x m shape at every node");
        if (!fx.allFinite() || !sx.allFinite() || !std::isfinite(vx))
          throw StructuralError("model fields must be finite");
        if (vx < 0.0) throw StructuralError("killing rate V must be nonnegative");
        const Matrix a = sx * sx.transpose();
        if (n == 2 && std::abs(a(0, 1)) > 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()))
          throw StructuralError("two-dimensional grids require a diagonal diffusion matrix");
        const double amax = a.diagonal().maxCoeff();
        const Eigen::Index rank =
            amax > 0.0 ? numerical_rank(a, 1e-10) : 0;
        if (static_cast<std::size_t>(rank) != m_)
          throw StructuralError("diffusion matrix a = sigma sigma' changes rank at node " +
                                std::to_string(i) + ", t = " + std::to_string(t));
        drift_[k].col(Eigen::Index(i)) = fx;
        adiag_[k].col(Eigen::Index(i)) = a.diagonal();
        if (mi > 0) sigma_[k].col(Eigen::Index(i)) = Eigen::Map<const Vector>(sx.data(), ni * mi);
        killing_[k](Eigen::Index(i)) = vx;
      }
    }
    for (std::size_t k = 0; k < grid_.intervals(); ++k) {
      const SparseMatrix Q = detail::generator(mesh_, drift_[k], adiag_[k], stencil_);
      const double limit = detail::stable_step(mesh_, drift_[k], adiag_[k], Q);
      if (grid_.dt(k) > limit * (1.0 + 1e-12))
        throw StabilityError("time step " + std::to_string(grid_.dt(k)) + " on interval " +
                             std::to_string(k) + " exceeds the stability limit " +
                             std::to_string(limit));
    }
  }

  const Mesh& mesh() const { return mesh_; }
  const TimeGrid& grid() const { return grid_; }
  std::size_t n() const { return mesh_.dims(); }
  std::size_t m() const { return m_; }
  DriftStencil stencil() const { return stencil_; }

  /// n × nodes at grid time k.
  const Matrix& drift(std::size_t k) const { return drift_.at(k); }
  /// Diagonal of a = σσᵀ, n × nodes at grid time k.
  const Matrix& diffusion_diagonal(std::size_t k) const { return adiag_.at(k); }
  /// σ at one node as an n × m matrix.
  Matrix sigma(std::size_t k, std::size_t node) const {
    return Eigen::Map<const Matrix>(sigma_.at(k).col(Eigen::Index(node)).data(), Eigen::Index(n()),
                                    Eigen::Index(m_));
  }
  const Vector& killing(std::size_t k) const { return killing_.at(k); }

 private:
  Mesh mesh_;
  TimeGrid grid_;
  DriftStencil stencil_;
  std::size_t m_ = 0;
  std::vector<Matrix> drift_, adiag_, sigma_;
  std::vector<Vector> killing_;
};

/// Per-interval transition matrices P_k.
class Propagators {
 public:
  Propagators() = default;
  explicit Propagators(std::vector<SparseMatrix> P) : P_(std::move(P)) {}

  std::size_t intervals() const { return P_.size(); }
  const SparseMatrix& transition(std::size_t k) const { return P_.at(k); }

  /// φ_k = P_k φ_{k+1}.
  Vector backward_step(std::size_t k, const Vector& phi_next) const { return P_.at(k) * phi_next; }
  /// ρ_{k+1} = P_kᵀ ρ_k.
  Vector forward_step(std::size_t k, const Vector& rho) const {
    return P_.at(k).transpose() * rho;
  }

 private:
  std::vector<SparseMatrix> P_;
};

inline Propagators build_propagators(const GridModel& gm) {
  const std::size_t N = gm.grid().intervals();
  std::vector<SparseMatrix> P(N);
  parallel_for(N, [&](std::size_t k) {
    const double dt = gm.grid().dt(k);
    SparseMatrix Q = detail::generator(gm.mesh(), gm.drift(k), gm.diffusion_diagonal(k), gm.stencil());
    const Vector d = (-0.5 * dt * gm.killing(k)).array().exp().matrix();
    SparseMatrix I(Q.rows(), Q.cols());
    I.setIdentity();
    SparseMatrix Pk = I + dt * Q;
    P[k] = d.asDiagonal() * Pk * d.asDiagonal();
    P[k].makeCompressed();
  });
  return Propagators(std::move(P));
}

namespace detail {

inline void check_size(const GridModel& gm, const Vector& v, const char* what) {
  if (static_cast<std::size_t>(v.size()) != gm.mesh().nodes())
    throw StructuralError(std::string(what) + " must have one value per mesh node");
}

inline void check_finite(const Vector& v, std::size_t step, const char* what) {
  if (!v.allFinite())
    throw PositivityError(std::string(what) + " became non-finite at step " + std::to_string(step),
                          step);
}

}  // namespace detail

inline Field propagate_forward(const Propagators& props, const Vector& initial) {
  Field out{FieldKind::kDensity, {}};
  out.values.reserve(props.intervals() + 1);
  out.values.push_back(initial);
  detail::check_finite(initial, 0, "forward field");
  for (std::size_t k = 0; k < props.intervals(); ++k) {
    out.values.push_back(props.forward_step(k, out.values.back()));
    detail::check_finite(out.values.back(), k + 1, "forward field");
  }
  return out;
}

inline Field propagate_backward(const Propagators& props, const Vector& terminal) {
  const std::size_t N = props.intervals();
  Field out{FieldKind::kFactor, std::vector<Vector>(N + 1)};
  out.values[N] = terminal;
  detail::check_finite(terminal, N, "backward field");
  for (std::size_t k = N; k-- > 0;) {
    out.values[k] = props.backward_step(k, out.values[k + 1]);
    detail::check_finite(out.values[k], k, "backward field");
  }
  return out;
}

inline Field propagate_forward(const GridModel& gm, const Vector& initial) {
  detail::check_size(gm, initial, "initial field");
  return propagate_forward(build_propagators(gm), initial);
}

inline Field propagate_backward(const GridModel& gm, const Vector& terminal) {
  detail::check_size(gm, terminal, "terminal field");
  return propagate_backward(build_propagators(gm), terminal);
}

struct FortetOptions {
  double tol = 1e-8;
  int max_iters = 1000;
  std::optional<Vector> phi_T_guess;  // defaults to φ(·,T) ≡ 1
};

struct SchrodingerFactors {
  Field phi;
  Field phihat;
  std::vector<Vector> lambda;  // −log φ
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  bool residual_monotone = true;
  std::vector<double> residual_history;

  /// ρ̃_k = φ_k φ̂_k.
  Vector density(std::size_t k) const { return phi.at(k).cwiseProduct(phihat.at(k)); }
};

/// Alternating boundary projections starting from φ(·,T). The residual is
/// the larger of the two relative L¹ boundary-product errors; on the
/// iteration cap the last iterate is returned with converged = false.
inline SchrodingerFactors fortet_iterate(const GridModel& gm, const Vector& rho0,
                                         const Vector& rhoT, const FortetOptions& opts = {}) {
  detail::check_size(gm, rho0, "rho0");
  detail::check_size(gm, rhoT, "rhoT");
  if ((rho0.array() < 0.0).any() || (rhoT.array() < 0.0).any())
    throw StructuralError("boundary densities must be nonnegative");
  if (opts.max_iters < 1) throw StructuralError("fortet_iterate needs max_iters >= 1");
  const Vector r0 = rho0.cwiseMax(kPositivityFloor);
  const Vector rT = rhoT.cwiseMax(kPositivityFloor);
  const std::size_t N = gm.grid().intervals();
  const Propagators props = build_propagators(gm);

  Vector phiT = opts.phi_T_guess ? *opts.phi_T_guess : Vector::Ones(r0.size());
  detail::check_size(gm, phiT, "phi_T guess");
  if (!(phiT.array() > 0.0).all()) throw StructuralError("phi_T guess must be strictly positive");

  auto floor_check = [](const Vector& v, std::size_t step, const char* what) {
    if (!(v.array() > kPositivityFloor).all())
      throw PositivityError(std::string(what) + " reached the positivity floor at step " +
                                std::to_string(step),
                            step);
  };

  SchrodingerFactors out;
  const double m0 = r0.lpNorm<1>(), mT = rT.lpNorm<1>();
  for (int it = 1; it <= opts.max_iters; ++it) {
    out.phi = propagate_backward(props, phiT);
    floor_check(out.phi.at(0), 0, "phi");
    const Vector phihat0 = r0.cwiseQuotient(out.phi.at(0));
    out.phihat = propagate_forward(props, phihat0);
    out.phihat.kind = FieldKind::kFactor;
    floor_check(out.phihat.at(N), N, "phihat");

    const double e0 = (out.density(0) - r0).lpNorm<1>() / m0;
    const double eT = (out.density(N) - rT).lpNorm<1>() / mT;
    const double res = std::max(e0, eT);
    if (!out.residual_history.empty() && res > out.residual_history.back())
      out.residual_monotone = false;
    out.residual_history.push_back(res);
    out.residual = res;
    out.iterations = it;
    if (res <= opts.tol) {
      out.converged = true;
      break;
    }
    phiT = rT.cwiseQuotient(out.phihat.at(N));
  }
  out.lambda.reserve(N + 1);
  for (const auto& v : out.phi.values) out.lambda.push_back(-v.array().log().matrix());
  return out;
}

/// ∇ log φ by centered differences in the interior and second-order
/// one-sided differences on the edges; n × nodes.
inline Matrix log_gradient(const Mesh& mesh, const Vector& phi) {
  if (static_cast<std::size_t>(phi.size()) != mesh.nodes())
    throw StructuralError("field must have one value per mesh node");
  if (!(phi.array() > kPositivityFloor).all())
    throw PositivityError("log gradient needs a strictly positive field", 0);
  const Vector lp = phi.array().log().matrix();
  Matrix g(Eigen::Index(mesh.dims()), Eigen::Index(mesh.nodes()));
  for (std::size_t i = 0; i < mesh.nodes(); ++i) {
    for (std::size_t d = 0; d < mesh.dims(); ++d) {
      const std::size_t id = mesh.axis_index(i, d), s = mesh.stride(d), c = mesh.count(d);
      const double h = mesh.spacing(d);
      const auto at = [&](std::size_t j) { return lp(Eigen::Index(j)); };
      double v;
      if (id == 0)
        v = (-3.0 * at(i) + 4.0 * at(i + s) - at(i + 2 * s)) / (2.0 * h);
      else if (id + 1 == c)
        v = (3.0 * at(i) - 4.0 * at(i - s) + at(i - 2 * s)) / (2.0 * h);
      else
        v = (at(i + s) - at(i - s)) / (2.0 * h);
      g(Eigen::Index(d), Eigen::Index(i)) = v;
    }
  }
  return g;
}

/// Control u(x, t_k), m × nodes at every grid time.
struct ControlField {
  TimeGrid grid;
  std::size_t m = 0;
  std::vector<Matrix> u;

  static ControlField from_function(const Mesh& mesh, const TimeGrid& grid, std::size_t m,
                                    const std::function<Vector(const Vector&, double)>& fn) {
    ControlField c{grid, m, {}};
    for (std::size_t k = 0; k < grid.size(); ++k) {
      Matrix uk(Eigen::Index(m), Eigen::Index(mesh.nodes()));
      for (std::size_t i = 0; i < mesh.nodes(); ++i) uk.col(Eigen::Index(i)) = fn(mesh.point(i), grid.t(k));
      c.u.push_back(std::move(uk));
    }
    return c;
  }
};

/// u* = σᵀ ∇ log φ at every node and grid time.
inline ControlField extract_control(const SchrodingerFactors& factors, const GridModel& gm) {
  const std::size_t T = gm.grid().size();
  if (factors.phi.times() != T) throw StructuralError("factors do not match the model time grid");
  ControlField c{gm.grid(), gm.m(), std::vector<Matrix>(T)};
  for (std::size_t k = 0; k < T; ++k) {
    Matrix grad;
    try {
      grad = log_gradient(gm.mesh(), factors.phi.at(k));
    } catch (const PositivityError&) {
      throw PositivityError("phi breached the positivity floor at step " + std::to_string(k), k);
    }
    Matrix uk(Eigen::Index(gm.m()), Eigen::Index(gm.mesh().nodes()));
    for (std::size_t i = 0; i < gm.mesh().nodes(); ++i)
      uk.col(Eigen::Index(i)) = gm.sigma(k, i).transpose() * grad.col(Eigen::Index(i));
    c.u[k] = std::move(uk);
  }
  return c;
}

/// Controlled probability flow with drift f + σu and no killing. Each
/// interval holds u(·, t_k) fixed and is split into the fewest equal
/// substeps that satisfy the stability bound for the augmented drift.
inline Field evolve_controlled(const GridModel& gm, const Vector& rho0, const ControlField& u,
                               std::size_t max_substeps = 100000) {
  detail::check_size(gm, rho0, "rho0");
  const std::size_t N = gm.grid().intervals();
  const std::size_t nodes = gm.mesh().nodes();
  if (!(u.grid == gm.grid()) || u.m != gm.m() || u.u.size() != gm.grid().size())
    throw StructuralError("control field does not match the model");
  Field out{FieldKind::kDensity, {rho0}};
  for (std::size_t k = 0; k < N; ++k) {
    if (static_cast<std::size_t>(u.u[k].cols()) != nodes)
      throw StructuralError("control field has the wrong number of nodes");
    Matrix drift = gm.drift(k);
    for (std::size_t i = 0; i < nodes; ++i)
      drift.col(Eigen::Index(i)) += gm.sigma(k, i) * u.u[k].col(Eigen::Index(i));
    if (!drift.allFinite()) throw StructuralError("controlled drift is not finite");
    const SparseMatrix Q = detail::generator(gm.mesh(), drift, gm.diffusion_diagonal(k), gm.stencil());
    const double limit = detail::stable_step(gm.mesh(), drift, gm.diffusion_diagonal(k), Q);
    const double dt = gm.grid().dt(k);
    const double ratio = dt / limit;
    std::size_t sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(ratio * (1.0 - 1e-12))));
    if (sub > max_substeps)
      throw StabilityError("controlled drift needs " + std::to_string(sub) +
                           " substeps on interval " + std::to_string(k));
    SparseMatrix I(Q.rows(), Q.cols());
    I.setIdentity();
    const SparseMatrix F = I + (dt / static_cast<double>(sub)) * Q;
    Vector r = out.values.back();
    for (std::size_t s = 0; s < sub; ++s) r = F.transpose() * r;
    detail::check_finite(r, k + 1, "controlled density");
    out.values.push_back(std::move(r));
  }
  return out;
}

/// Discrete Gaussian density on the mesh, normalized to unit discrete mass.
inline Vector gaussian_density(const Mesh& mesh, const Vector& mean, const Matrix& cov) {
  if (mean.size() != Eigen::Index(mesh.dims()) || cov.rows() != mean.size() || cov.cols() != mean.size())
    throw StructuralError("gaussian_density: dimension mismatch");
  const Matrix P = spd_inverse(cov);
  Vector rho(Eigen::Index(mesh.nodes()));
  for (std::size_t i = 0; i < mesh.nodes(); ++i) {
    const Vector d = mesh.point(i) - mean;
    rho(Eigen::Index(i)) = std::exp(-0.5 * d.dot(P * d));
  }
  return rho / mesh.integrate(rho);
}

/// sqrt(Σ_k Σ_i w_ki ‖u_ki − r_ki‖² dt_k / Σ_k Σ_i w_ki ‖r_ki‖² dt_k), k < N.
inline double relative_l2_error(const std::vector<Vector>& weight, const ControlField& u,
                                const ControlField& ref) {
  const std::size_t N = u.grid.intervals();
  if (!(u.grid == ref.grid) || weight.size() < N || u.m != ref.m)
    throw StructuralError("relative_l2_error: inputs do not share a grid");
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    const double dt = u.grid.dt(k);
    const Eigen::RowVectorXd e = (u.u[k] - ref.u[k]).colwise().squaredNorm();
    const Eigen::RowVectorXd r = ref.u[k].colwise().squaredNorm();
    num += dt * e.dot(weight[k].transpose());
    den += dt * r.dot(weight[k].transpose());
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace steer::pde
