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

// Run configuration: a TOML file with sections
//
//   [problem]  A, B, S, Sigma0, SigmaT (nested arrays), T
//   [method]   name = "sdp" | "riccati" | "pde" | "simulate"
//   [numeric]  N, tol, max_iters, seed, paths, substeps, rho
//   [pde]      nodes, half_width, killing, stencil
//   [output]   directory, formats
//
// Parsing is strict: unknown sections or keys, wrong value types and ragged
// matrices are rejected with ConfigError.

#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "steer/core_model.hpp"
#include "steer/errors.hpp"
#include "steer/linalg.hpp"

namespace steer::cli {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ProblemSection {
  Matrix A, B, S, Sigma0, SigmaT;
  double T = 1.0;
};

struct NumericSection {
  std::size_t N = 100;
  double tol = 1e-6;
  std::optional<int> max_iters;
  std::uint64_t seed = 42;
  std::size_t paths = 1000;
  std::size_t substeps = 1;
  double rho = 1.0;
};

struct PdeSection {
  std::size_t nodes = 200;
  std::optional<double> half_width;
  double killing = 0.0;
  std::string stencil = "hybrid";
};

struct OutputSection {
  std::string directory = "out";
  std::vector<std::string> formats{"csv"};
};

struct RunConfig {
  ProblemSection problem;
  std::string method = "sdp";
  NumericSection numeric;
  PdeSection pde;
  OutputSection output;
  std::string text;  // raw file contents

  SteeringProblem make_problem() const {
    const Matrix S = problem.S.size() ? problem.S
                                      : Matrix::Zero(problem.A.rows(), problem.A.cols());
    return SteeringProblem(problem.A, problem.B, LossWeight::constant(S), problem.Sigma0,
                           problem.SigmaT, problem.T);
  }
};

namespace detail {

inline std::string where(const toml::source_region& r) {
  return r.begin.line ? " (line " + std::to_string(r.begin.line) + ")" : std::string();
}

inline void allow_keys(const toml::table& t, const std::string& section,
                       const std::set<std::string>& keys) {
  for (const auto& [k, v] : t) {
    if (!keys.count(std::string(k.str())))
      throw ConfigError("unknown key '" + std::string(k.str()) + "' in [" + section + "]" +
                        where(v.source()));
  }
}

inline double number(const toml::node& n, const std::string& name) {
  if (auto v = n.as_floating_point()) return v->get();
  if (auto v = n.as_integer()) return static_cast<double>(v->get());
  throw ConfigError("'" + name + "' must be a number" + where(n.source()));
}

inline std::int64_t integer(const toml::node& n, const std::string& name, std::int64_t min) {
  auto v = n.as_integer();
  if (!v) throw ConfigError("'" + name + "' must be an integer" + where(n.source()));
  if (v->get() < min)
    throw ConfigError("'" + name + "' must be at least " + std::to_string(min) + where(n.source()));
  return v->get();
}

inline std::string string(const toml::node& n, const std::string& name) {
  auto v = n.as_string();
  if (!v) throw ConfigError("'" + name + "' must be a string" + where(n.source()));
  return v->get();
}

inline Matrix matrix(const toml::node& n, const std::string& name) {
  const auto* rows = n.as_array();
  if (!rows || rows->empty())
    throw ConfigError("'" + name + "' must be a non-empty array of rows" + where(n.source()));
  std::vector<std::vector<double>> vals;
  for (const auto& r : *rows) {
    const auto* row = r.as_array();
    if (!row) throw ConfigError("'" + name + "' rows must be arrays" + where(r.source()));
    std::vector<double> v;
    for (const auto& x : *row) v.push_back(number(x, name));
    if (!vals.empty() && v.size() != vals.front().size())
      throw ConfigError("'" + name + "' is not rectangular" + where(r.source()));
    vals.push_back(std::move(v));
  }
  Matrix M(Eigen::Index(vals.size()), Eigen::Index(vals.front().size()));
  for (std::size_t i = 0; i < vals.size(); ++i)
    for (std::size_t j = 0; j < vals[i].size(); ++j) M(Eigen::Index(i), Eigen::Index(j)) = vals[i][j];
  return M;
}

inline const toml::table* section(const toml::table& root, const char* name, bool required) {
  const toml::node* n = root.get(name);
  if (!n) {
    if (required) throw ConfigError(std::string("missing section [") + name + "]");
    return nullptr;
  }
  const auto* t = n->as_table();
  if (!t) throw ConfigError(std::string("'") + name + "' must be a section" + where(n->source()));
  return t;
}

}  // namespace detail

inline RunConfig parse_config_string(const std::string& text, const std::string& origin = "config") {
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string(e.description()) + detail::where(e.source()));
  }
  detail::allow_keys(root, "root", {"problem", "method", "numeric", "pde", "output"});

  RunConfig cfg;
  cfg.text = text;
  namespace d = detail;

  const auto& pr = *d::section(root, "problem", true);
  d::allow_keys(pr, "problem", {"A", "B", "S", "Sigma0", "SigmaT", "T"});
  for (const char* k : {"A", "B", "Sigma0", "SigmaT", "T"})
    if (!pr.get(k)) throw ConfigError(std::string("missing key '") + k + "' in [problem]");
  cfg.problem.A = d::matrix(*pr.get("A"), "A");
  cfg.problem.B = d::matrix(*pr.get("B"), "B");
  if (const auto* s = pr.get("S")) cfg.problem.S = d::matrix(*s, "S");
  cfg.problem.Sigma0 = d::matrix(*pr.get("Sigma0"), "Sigma0");
  cfg.problem.SigmaT = d::matrix(*pr.get("SigmaT"), "SigmaT");
  cfg.problem.T = d::number(*pr.get("T"), "T");

  if (const auto* me = d::section(root, "method", false)) {
    d::allow_keys(*me, "method", {"name"});
    if (const auto* n = me->get("name")) {
      cfg.method = d::string(*n, "name");
      if (cfg.method != "sdp" && cfg.method != "riccati" && cfg.method != "pde" &&
          cfg.method != "simulate")
        throw ConfigError("method name must be one of sdp, riccati, pde, simulate");
    }
  }

  if (const auto* nu = d::section(root, "numeric", false)) {
    d::allow_keys(*nu, "numeric", {"N", "tol", "max_iters", "seed", "paths", "substeps", "rho"});
    auto& n = cfg.numeric;
    if (const auto* v = nu->get("N")) n.N = std::size_t(d::integer(*v, "N", 1));
    if (const auto* v = nu->get("tol")) n.tol = d::number(*v, "tol");
    if (const auto* v = nu->get("max_iters")) n.max_iters = int(d::integer(*v, "max_iters", 1));
    if (const auto* v = nu->get("seed")) n.seed = std::uint64_t(d::integer(*v, "seed", 0));
    if (const auto* v = nu->get("paths")) n.paths = std::size_t(d::integer(*v, "paths", 2));
    if (const auto* v = nu->get("substeps")) n.substeps = std::size_t(d::integer(*v, "substeps", 1));
    if (const auto* v = nu->get("rho")) n.rho = d::number(*v, "rho");
    if (!(n.tol > 0.0)) throw ConfigError("'tol' must be positive");
    if (!(n.rho > 0.0)) throw ConfigError("'rho' must be positive");
  }

  if (const auto* pd = d::section(root, "pde", false)) {
    d::allow_keys(*pd, "pde", {"nodes", "half_width", "killing", "stencil"});
    auto& p = cfg.pde;
    if (const auto* v = pd->get("nodes")) p.nodes = std::size_t(d::integer(*v, "nodes", 3));
    if (const auto* v = pd->get("half_width")) p.half_width = d::number(*v, "half_width");
    if (const auto* v = pd->get("killing")) p.killing = d::number(*v, "killing");
    if (const auto* v = pd->get("stencil")) p.stencil = d::string(*v, "stencil");
    if (p.stencil != "hybrid" && p.stencil != "upwind")
      throw ConfigError("pde stencil must be 'hybrid' or 'upwind'");
    if (p.half_width && !(*p.half_width > 0.0)) throw ConfigError("'half_width' must be positive");
    if (!(p.killing >= 0.0)) throw ConfigError("'killing' must be nonnegative");
  }

  if (const auto* out = d::section(root, "output", false)) {
    d::allow_keys(*out, "output", {"directory", "formats"});
    if (const auto* v = out->get("directory")) cfg.output.directory = d::string(*v, "directory");
    if (const auto* v = out->get("formats")) {
      const auto* arr = v->as_array();
      if (!arr) throw ConfigError("'formats' must be an array of strings");
      cfg.output.formats.clear();
      for (const auto& f : *arr) {
        const std::string s = d::string(f, "formats");
        if (s != "csv" && s != "json") throw ConfigError("unknown output format '" + s + "'");
        cfg.output.formats.push_back(s);
      }
    }
  }
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str(), path);
}

}  // namespace steer::cli
