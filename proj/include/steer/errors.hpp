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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace steer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs whose shapes or structure are inconsistent (wrong dimensions,
/// empty grids, unsupported configurations). Distinct from a well-formed
/// problem that fails a validation check.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A well-formed problem that fails a precondition check (for example a
/// singular target covariance or an uncontrollable pair).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A matrix Riccati flow left the admissible range (finite escape time).
class EscapeTimeError : public Error {
 public:
  EscapeTimeError(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// An iterative solver stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

/// A matrix that must be invertible (positive definite) is not.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& what, std::size_t index,
                      double eigenvalue)
      : Error(what), index_(index), eigenvalue_(eigenvalue) {}
  std::size_t index() const { return index_; }
  double eigenvalue() const { return eigenvalue_; }

 private:
  std::size_t index_;
  double eigenvalue_;
};

/// Explicit time step too large for a positivity-preserving update.
class StabilityError : public Error {
 public:
  using Error::Error;
};

/// A field that must stay strictly positive hit the positivity floor, or a
/// propagated field became non-finite.
class PositivityError : public Error {
 public:
  PositivityError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace steer
