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

// Command-line front end.
//
//   steer <subcommand> --config FILE [--out DIR] [--steps N] [--tol X]
//                      [--seed S] [--paths C] [--gains CSV]
//
// Subcommands: steer-sdp, steer-riccati, steer-pde, simulate, validate.
// Exit codes: 0 success, 1 configuration or structural error (nothing is
// written), 2 solver non-convergence (manifest.json is still written).
//
// Output files (in --out, default [output] directory):
//   gains.csv       t,k1..kn            one row per interval
//   covariance.csv  t,sigma11,sigma12.. one row per grid time
//   riccati.csv     t,pi11..,h11..,c,chat
//   control.csv     t,x1[,x2],u1        one row per node and grid time
//   density.csv     t,x1[,x2],rho
//   paths.csv       path_id,t,x1..xn,u1..um
//   ensemble.csv    t,mean1..,sigma11..
//   manifest.json   config_sha256, method, n, m, N, tol, iterations,
//                   residuals, objective, wall_ms, status
// With "json" in [output] formats, results.json repeats every table.

#pragma once

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "steer/cli/config.hpp"
#include "steer/cli/io.hpp"
#include "steer/core_model.hpp"
#include "steer/riccati.hpp"
#include "steer/schrodinger_pde.hpp"
#include "steer/sdp_steering.hpp"
#include "steer/simulate.hpp"

namespace steer::cli {

struct Overrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::size_t> steps;
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<std::string> gains;
};

namespace detail {

using Clock = std::chrono::steady_clock;

struct Run {
  RunConfig cfg;
  std::filesystem::path out_dir;
  Clock::time_point start = Clock::now();
  std::vector<std::pair<std::string, CsvTable>> tables;
  Manifest manifest;

  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  }

  bool wants(const std::string& fmt) const {
    const auto& f = cfg.output.formats;
    return std::find(f.begin(), f.end(), fmt) != f.end();
  }

  void write() {
    std::filesystem::create_directories(out_dir);
    if (wants("csv"))
      for (const auto& [name, t] : tables) write_atomic(out_dir / (name + ".csv"), t.str());
    if (wants("json") && !tables.empty()) {
      nlohmann::ordered_json j;
      for (const auto& [name, t] : tables) {
        j[name]["columns"] = t.header;
        j[name]["rows"] = t.rows;
      }
      write_atomic(out_dir / "results.json", j.dump() + "\n");
    }
    manifest.wall_ms = elapsed_ms();
    write_atomic(out_dir / "manifest.json", manifest.str());
  }
};

inline Run prepare(const Overrides& ov, const std::string& method) {
  Run r;
  r.cfg = parse_config(ov.config);
  auto& n = r.cfg.numeric;
  if (ov.steps) {
    if (*ov.steps < 1) throw ConfigError("--steps must be at least 1");
    n.N = *ov.steps;
  }
  if (ov.tol) {
    if (!(*ov.tol > 0.0)) throw ConfigError("--tol must be positive");
    n.tol = *ov.tol;
  }
  if (ov.seed) n.seed = *ov.seed;
  if (ov.paths) {
    if (*ov.paths < 2) throw ConfigError("--paths must be at least 2");
    n.paths = *ov.paths;
  }
  r.out_dir = ov.out ? *ov.out : r.cfg.output.directory;
  r.manifest.config_sha256 = sha256_hex(r.cfg.text);
  r.manifest.method = method;
  r.manifest.N = n.N;
  r.manifest.tol = n.tol;
  return r;
}

inline void require_valid(const SteeringProblem& p, const TimeGrid& g) {
  const auto rep = validate_problem(p, g);
  if (rep.passed()) return;
  std::string failed;
  for (const auto& c : rep.checks)
    if (!c.passed) failed += " " + c.name;
  throw ValidationError("problem failed validation:" + failed);
}

inline void set_dims(Run& r, const SteeringProblem& p) {
  r.manifest.n = p.n();
  r.manifest.m = p.m();
}

inline int run_sdp(const Overrides& ov) {
  Run r = prepare(ov, "sdp");
  const SteeringProblem p = r.cfg.make_problem();
  set_dims(r, p);
  const auto prog = sdp::discretize(p, r.cfg.numeric.N);
  require_valid(p, prog.grid());
  sdp::SolverOptions o;
  o.eps_primal = o.eps_dual = r.cfg.numeric.tol;
  o.rho = r.cfg.numeric.rho;
  o.threads = thread_count();
  if (r.cfg.numeric.max_iters) o.max_iters = *r.cfg.numeric.max_iters;
  const auto sol = sdp::solve(prog, o);
  const bool ok = sol.stats.status == sdp::SolveStatus::kConverged;

  try {
    r.tables.emplace_back("gains", gains_table(sol.gains()));
  } catch (const SingularMatrixError&) {
    if (ok) throw;
  }
  r.tables.emplace_back("covariance", covariance_table(sol.path()));
  auto& m = r.manifest;
  m.iterations = sol.stats.iterations;
  m.residuals = {{"primal", sol.stats.primal_residual},
                 {"dual", sol.stats.dual_residual},
                 {"dynamics", sdp::dynamics_residual(prog, sol)},
                 {"terminal", (sol.Sigma.back() - p.SigmaT()).norm()},
                 {"min_lmi_margin", sdp::min_lmi_margin(sol)}};
  m.objective = sol.stats.objective_value;
  m.status = sdp::to_string(sol.stats.status);
  r.write();
  return ok ? 0 : 2;
}

inline int run_riccati(const Overrides& ov, std::ostream& err) {
  Run r = prepare(ov, "riccati");
  const SteeringProblem p = r.cfg.make_problem();
  set_dims(r, p);
  const auto grid = TimeGrid::uniform(p.T(), r.cfg.numeric.N);
  require_valid(p, grid);
  riccati::RiccatiOptions o;
  o.tol = r.cfg.numeric.tol;
  o.threads = thread_count();
  if (r.cfg.numeric.max_iters) o.max_iters = *r.cfg.numeric.max_iters;
  riccati::RiccatiSolution sol;
  try {
    sol = riccati::solve_coupled(p, grid, std::nullopt, o);
  } catch (const ConvergenceError& e) {
    r.manifest.iterations = e.iterations();
    r.manifest.residuals = {{"terminal", e.residual()}};
    r.manifest.status = "not-converged";
    r.write();
    err << "steer: " << e.what() << "\n";
    return 2;
  }
  const auto gains = sol.gains(p.B());
  const auto cov = sol.covariance();
  r.tables.emplace_back("gains", gains_table(gains));
  r.tables.emplace_back("covariance", covariance_table(cov));

  CsvTable ric;
  const Eigen::Index n = p.n();
  ric.header.push_back("t");
  for (const char* w : {"pi", "h"})
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j)
        ric.header.push_back(w + std::to_string(i + 1) + std::to_string(j + 1));
  ric.header.push_back("c");
  ric.header.push_back("chat");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::vector<double> row{grid.t(k)};
    for (const Matrix* M : {&sol.Pi[k], &sol.H[k]})
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) row.push_back((*M)(i, j));
    row.push_back(sol.c[k]);
    row.push_back(sol.chat[k]);
    ric.rows.push_back(std::move(row));
  }
  r.tables.emplace_back("riccati", std::move(ric));

  r.manifest.iterations = sol.iterations;
  r.manifest.residuals = {{"terminal", sol.residual}};
  r.manifest.objective = cost_functional(p, gains, cov);
  r.manifest.status = "converged";
  r.write();
  return 0;
}

inline int run_pde(const Overrides& ov, std::ostream& err) {
  Run r = prepare(ov, "pde");
  const SteeringProblem p = r.cfg.make_problem();
  set_dims(r, p);
  const auto grid = TimeGrid::uniform(p.T(), r.cfg.numeric.N);
  require_valid(p, grid);
  const Eigen::Index n = p.n();
  if (n > 2) throw StructuralError("steer-pde supports state dimension 1 or 2");
  const auto& pc = r.cfg.pde;
  const double L = pc.half_width.value_or(
      6.0 * std::sqrt(std::max(symmetric_eigenvalues(p.Sigma0()).maxCoeff(),
                               symmetric_eigenvalues(p.SigmaT()).maxCoeff())));
  const pde::Mesh mesh = n == 1 ? pde::Mesh::line(-L, L, pc.nodes)
                                : pde::Mesh::rectangle({-L, L, pc.nodes}, {-L, L, pc.nodes});
  const Matrix A = p.A(), B = p.B(), S = p.S(0.0);
  const double v0 = pc.killing;
  const pde::GridModel gm(
      mesh, grid, [A](const Vector& x, double) { return Vector(A * x); },
      [B](const Vector&, double) { return B; },
      [S, v0](const Vector& x, double) { return 0.5 * x.dot(S * x) + v0; },
      pc.stencil == "upwind" ? pde::DriftStencil::kUpwind : pde::DriftStencil::kHybrid);
  const Vector zero = Vector::Zero(n);
  const Vector rho0 = pde::gaussian_density(mesh, zero, p.Sigma0());
  const Vector rhoT = pde::gaussian_density(mesh, zero, p.SigmaT());
  pde::FortetOptions fo;
  fo.tol = r.cfg.numeric.tol;
  if (r.cfg.numeric.max_iters) fo.max_iters = *r.cfg.numeric.max_iters;

  auto& m = r.manifest;
  pde::SchrodingerFactors f;
  pde::ControlField u;
  pde::Field rho;
  try {
    f = pde::fortet_iterate(gm, rho0, rhoT, fo);
    u = pde::extract_control(f, gm);
    rho = pde::evolve_controlled(gm, rho0, u);
  } catch (const PositivityError& e) {
    m.iterations = f.iterations;
    m.residuals = {{"fortet", f.iterations ? f.residual : std::numeric_limits<double>::infinity()}};
    m.status = "positivity-floor";
    r.write();
    err << "steer: " << e.what() << "\n";
    return 2;
  }

  CsvTable control, density;
  control.header = density.header = {"t"};
  for (Eigen::Index d = 0; d < n; ++d) {
    control.header.push_back("x" + std::to_string(d + 1));
    density.header.push_back("x" + std::to_string(d + 1));
  }
  for (std::size_t j = 0; j < gm.m(); ++j) control.header.push_back("u" + std::to_string(j + 1));
  density.header.push_back("rho");
  double objective = 0.0, mass_drift = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (std::size_t i = 0; i < mesh.nodes(); ++i) {
      const Vector x = mesh.point(i);
      std::vector<double> row{grid.t(k)};
      for (Eigen::Index d = 0; d < n; ++d) row.push_back(x(d));
      std::vector<double> drow = row;
      for (Eigen::Index j = 0; j < u.u[k].rows(); ++j) row.push_back(u.u[k](j, Eigen::Index(i)));
      drow.push_back(rho.at(k)(Eigen::Index(i)));
      control.rows.push_back(std::move(row));
      density.rows.push_back(std::move(drow));
      if (k < grid.intervals())
        objective += grid.dt(k) * mesh.cell_volume() * rho.at(k)(Eigen::Index(i)) *
                     (0.5 * u.u[k].col(Eigen::Index(i)).squaredNorm() + gm.killing(k)(Eigen::Index(i)));
    }
    mass_drift = std::max(mass_drift, std::abs(mesh.integrate(rho.at(k)) - 1.0));
  }
  r.tables.emplace_back("control", std::move(control));
  r.tables.emplace_back("density", std::move(density));
  m.iterations = f.iterations;
  m.residuals = {{"fortet", f.residual},
                 {"terminal_l1", mesh.cell_volume() * (rho.at(grid.intervals()) - rhoT).lpNorm<1>()},
                 {"mass_drift", mass_drift}};
  m.objective = objective;
  m.status = f.converged ? "converged" : "iteration-cap";
  r.write();
  return f.converged ? 0 : 2;
}

inline int run_simulate(const Overrides& ov) {
  Run r = prepare(ov, "simulate");
  const SteeringProblem p = r.cfg.make_problem();
  set_dims(r, p);
  GainSchedule gains;
  if (ov.gains) {
    gains = gains_from_table(read_csv(*ov.gains), p.m(), p.n(), p.T());
  } else {
    const auto prog = sdp::discretize(p, r.cfg.numeric.N);
    require_valid(p, prog.grid());
    sdp::SolverOptions o;
    o.eps_primal = o.eps_dual = r.cfg.numeric.tol;
    o.rho = r.cfg.numeric.rho;
    if (r.cfg.numeric.max_iters) o.max_iters = *r.cfg.numeric.max_iters;
    const auto sol = sdp::solve(prog, o);
    if (sol.stats.status != sdp::SolveStatus::kConverged) {
      r.manifest.iterations = sol.stats.iterations;
      r.manifest.residuals = {{"primal", sol.stats.primal_residual}, {"dual", sol.stats.dual_residual}};
      r.manifest.status = sdp::to_string(sol.stats.status);
      r.write();
      return 2;
    }
    gains = sol.gains();
  }
  r.manifest.N = gains.grid.intervals();
  sim::SimulationOptions so;
  so.substeps = r.cfg.numeric.substeps;
  const auto paths = sim::sample_paths(p, gains, r.cfg.numeric.paths, r.cfg.numeric.seed, so);

  const Eigen::Index n = p.n(), mm = p.m();
  CsvTable pt;
  pt.header = {"path_id", "t"};
  for (Eigen::Index i = 0; i < n; ++i) pt.header.push_back("x" + std::to_string(i + 1));
  for (Eigen::Index j = 0; j < mm; ++j) pt.header.push_back("u" + std::to_string(j + 1));
  for (std::size_t id = 0; id < paths.size(); ++id)
    for (std::size_t k = 0; k < gains.grid.size(); ++k) {
      std::vector<double> row{double(id), gains.grid.t(k)};
      for (Eigen::Index i = 0; i < n; ++i) row.push_back(paths[id].states[k](i));
      for (Eigen::Index j = 0; j < mm; ++j) row.push_back(paths[id].controls[k](j));
      pt.rows.push_back(std::move(row));
    }

  const auto st = sim::summarize(paths, gains, p.S(), r.cfg.numeric.seed);
  CsvTable en;
  en.header = {"t"};
  for (Eigen::Index i = 0; i < n; ++i) en.header.push_back("mean" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j)
      en.header.push_back("sigma" + std::to_string(i + 1) + std::to_string(j + 1));
  for (std::size_t k = 0; k < gains.grid.size(); ++k) {
    std::vector<double> row{gains.grid.t(k)};
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(st.mean[k](i));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) row.push_back(st.covariance[k](i, j));
    en.rows.push_back(std::move(row));
  }
  r.tables.emplace_back("paths", std::move(pt));
  r.tables.emplace_back("ensemble", std::move(en));
  r.manifest.residuals = {
      {"cost_standard_error", st.cost_standard_error},
      {"terminal_covariance_error", (st.covariance.back() - p.SigmaT()).norm() / p.SigmaT().norm()}};
  r.manifest.objective = st.cost_mean;
  r.manifest.status = "ok";
  r.write();
  return 0;
}

inline int run_validate(const Overrides& ov, std::ostream& out) {
  const RunConfig cfg = parse_config(ov.config);
  const SteeringProblem p = cfg.make_problem();
  const auto rep = validate_problem(p, TimeGrid::uniform(p.T(), ov.steps.value_or(cfg.numeric.N)));
  for (const auto& c : rep.checks)
    out << (c.passed ? "pass " : "FAIL ") << c.name << " margin=" << format_double(c.margin)
        << (c.detail.empty() ? "" : " (" + c.detail + ")") << "\n";
  out << "controllability_rank=" << rep.controllability_rank << "\n";
  return rep.passed() ? 0 : 1;
}

}  // namespace detail

/// Parses arguments and runs one subcommand; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Covariance steering and Schrödinger bridge solvers", "steer"};
  app.require_subcommand(1);
  Overrides ov;
  const std::vector<std::pair<std::string, std::string>> subs{
      {"steer-sdp", "Discretized convex program solved by ADMM"},
      {"steer-riccati", "Coupled Riccati equations solved by shooting"},
      {"steer-pde", "Schrödinger system on a grid (Fortet iteration)"},
      {"simulate", "Monte Carlo closed-loop paths"},
      {"validate", "Check problem data and report"}};
  for (const auto& [name, desc] : subs) {
    auto* sc = app.add_subcommand(name, desc);
    sc->add_option("--config", ov.config, "Configuration file")->required();
    sc->add_option("--out", ov.out, "Output directory");
    sc->add_option("--steps", ov.steps, "Number of time intervals N");
    sc->add_option("--tol", ov.tol, "Solver tolerance");
    sc->add_option("--seed", ov.seed, "Random seed");
    sc->add_option("--paths", ov.paths, "Monte Carlo path count");
    sc->add_option("--gains", ov.gains, "Gain schedule CSV (simulate)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "steer-sdp") return detail::run_sdp(ov);
    if (cmd == "steer-riccati") return detail::run_riccati(ov, err);
    if (cmd == "steer-pde") return detail::run_pde(ov, err);
    if (cmd == "simulate") return detail::run_simulate(ov);
    return detail::run_validate(ov, out);
  } catch (const std::exception& e) {
    err << "steer: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace steer::cli
