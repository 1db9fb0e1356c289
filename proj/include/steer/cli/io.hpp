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

// File output: CSV tables, atomic writes, run manifests, gain schedule
// round trips.
//
// CSV: header row, comma separated, LF line endings, doubles printed with
// 17 significant digits.

#pragma once

#include <openssl/evp.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "steer/cli/config.hpp"
#include "steer/core_model.hpp"
#include "steer/errors.hpp"

namespace steer::cli {

class IoError : public Error {
 public:
  using Error::Error;
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr))
    throw IoError("sha256 failed");
  std::ostringstream ss;
  for (unsigned i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return ss.str();
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  const auto tmp = path.parent_path() /
                   (path.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << contents;
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::string str() const {
    std::string s;
    for (std::size_t j = 0; j < header.size(); ++j) s += (j ? "," : "") + header[j];
    s += '\n';
    for (const auto& r : rows) {
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (j) s += ',';
        s += format_double(r[j]);
      }
      s += '\n';
    }
    return s;
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw IoError("'" + path.string() + "' line " + std::to_string(lineno) + ": wrong column count");
    std::vector<double> row;
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (end == c.c_str() || *end != '\0')
        throw IoError("'" + path.string() + "' line " + std::to_string(lineno) + ": bad number '" + c + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Column names of a gain K (m × n): k1..kn when m = 1, else k{r}_{c}.
inline std::vector<std::string> gain_columns(Eigen::Index m, Eigen::Index n) {
  std::vector<std::string> cols;
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < n; ++c)
      cols.push_back(m == 1 ? "k" + std::to_string(c + 1)
                            : "k" + std::to_string(r + 1) + "_" + std::to_string(c + 1));
  return cols;
}

/// One row per interval: t_k, then K_k row by row.
inline CsvTable gains_table(const GainSchedule& g) {
  const Eigen::Index m = g.K.front().rows(), n = g.K.front().cols();
  CsvTable t;
  t.header.push_back("t");
  for (auto& c : gain_columns(m, n)) t.header.push_back(c);
  for (std::size_t k = 0; k < g.K.size(); ++k) {
    std::vector<double> row{g.grid.t(k)};
    for (Eigen::Index r = 0; r < m; ++r)
      for (Eigen::Index c = 0; c < n; ++c) row.push_back(g.K[k](r, c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Inverse of gains_table; the horizon T closes the last interval.
inline GainSchedule gains_from_table(const CsvTable& t, Eigen::Index m, Eigen::Index n, double T) {
  std::vector<std::string> expect{"t"};
  for (auto& c : gain_columns(m, n)) expect.push_back(c);
  if (t.header != expect) throw IoError("gain table header does not match the problem dimensions");
  if (t.rows.empty()) throw IoError("gain table has no rows");
  std::vector<double> pts;
  std::vector<Matrix> K;
  for (const auto& r : t.rows) {
    pts.push_back(r[0]);
    Matrix Kk(m, n);
    std::size_t j = 1;
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < n; ++b) Kk(a, b) = r[j++];
    K.push_back(std::move(Kk));
  }
  pts.push_back(T);
  return GainSchedule(TimeGrid::from_points(std::move(pts)), std::move(K));
}

/// t, then the upper triangle sigma{i}{j} (i ≤ j) of every Σ_k.
inline CsvTable covariance_table(const CovariancePath& p) {
  const Eigen::Index n = p.Sigma.front().rows();
  CsvTable t;
  t.header.push_back("t");
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j)
      t.header.push_back("sigma" + std::to_string(i + 1) + std::to_string(j + 1));
  for (std::size_t k = 0; k < p.Sigma.size(); ++k) {
    std::vector<double> row{p.grid.t(k)};
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) row.push_back(p.Sigma[k](i, j));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline nlohmann::ordered_json json_number(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

struct Manifest {
  std::string config_sha256;
  std::string method;
  Eigen::Index n = 0, m = 0;
  std::size_t N = 0;
  double tol = 0.0;
  long iterations = 0;
  std::vector<std::pair<std::string, double>> residuals;
  std::optional<double> objective;
  double wall_ms = 0.0;
  std::string status;

  std::string str() const {
    nlohmann::ordered_json j;
    j["config_sha256"] = config_sha256;
    j["method"] = method;
    j["n"] = n;
    j["m"] = m;
    j["N"] = N;
    j["tol"] = json_number(tol);
    j["iterations"] = iterations;
    j["residuals"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : residuals) j["residuals"][k] = json_number(v);
    j["objective"] = objective ? json_number(*objective) : nlohmann::ordered_json(nullptr);
    j["wall_ms"] = wall_ms;
    j["status"] = status;
    return j.dump(2) + "\n";
  }
};

}  // namespace steer::cli
