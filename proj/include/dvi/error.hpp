// Copyright 2026 The dvi-density Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DVI_ERROR_HPP
#define DVI_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dvi {

enum class ErrorKind {
  domain,
  grid_mismatch,
  convergence,
  divergence,
  definiteness,
  infeasible,
  bracket,
  max_iters,
  not_self_adjoint,
  schedule_infeasible,
  config,
  internal,
};

/// Machine-parsable name used in CLI diagnostics.
inline std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::domain: return "domain-error";
    case ErrorKind::grid_mismatch: return "grid-mismatch";
    case ErrorKind::convergence: return "convergence-error";
    case ErrorKind::divergence: return "divergence-error";
    case ErrorKind::definiteness: return "definiteness-error";
    case ErrorKind::infeasible: return "infeasible-error";
    case ErrorKind::bracket: return "bracket-error";
    case ErrorKind::max_iters: return "max-iters-error";
    case ErrorKind::not_self_adjoint: return "not-self-adjoint-error";
    case ErrorKind::schedule_infeasible: return "schedule-infeasibility";
    case ErrorKind::config: return "config-error";
    case ErrorKind::internal: return "internal-error";
  }
  return "internal-error";
}

/// Base of every error raised by the library. Derived types carry the
/// diagnostic payload named by the failing operation.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Rethrows a copy of this error (same dynamic type and payload) whose
  /// message is prefixed by `context`.
  [[noreturn]] virtual void rethrow_with_context(const std::string& context) const {
    throw Error(kind_, context + ": " + what());
  }

 private:
  ErrorKind kind_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, std::vector<double> last_iterate)
      : Error(ErrorKind::convergence, message), last_iterate_(std::move(last_iterate)) {}

  const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }

  [[noreturn]] void rethrow_with_context(const std::string& context) const override {
    throw ConvergenceError(context + ": " + what(), last_iterate_);
  }

 private:
  std::vector<double> last_iterate_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, double blow_up_time)
      : Error(ErrorKind::divergence, message), blow_up_time_(blow_up_time) {}

  double blow_up_time() const noexcept { return blow_up_time_; }

  [[noreturn]] void rethrow_with_context(const std::string& context) const override {
    throw DivergenceError(context + ": " + what(), blow_up_time_);
  }

 private:
  double blow_up_time_;
};

/// Raised when the assembled operator fails the definiteness certificate.
class DefinitenessError : public Error {
 public:
  DefinitenessError(const std::string& message, double eps_low, double eps_high)
      : Error(ErrorKind::definiteness, message), eps_low_(eps_low), eps_high_(eps_high) {}

  double eps_low() const noexcept { return eps_low_; }
  double eps_high() const noexcept { return eps_high_; }

  [[noreturn]] void rethrow_with_context(const std::string& context) const override {
    throw DefinitenessError(context + ": " + what(), eps_low_, eps_high_);
  }

 private:
  double eps_low_;
  double eps_high_;
};

class MaxItersError : public Error {
 public:
  MaxItersError(const std::string& message, std::vector<double> gap_trace)
      : Error(ErrorKind::max_iters, message), gap_trace_(std::move(gap_trace)) {}

  const std::vector<double>& gap_trace() const noexcept { return gap_trace_; }

  [[noreturn]] void rethrow_with_context(const std::string& context) const override {
    throw MaxItersError(context + ": " + what(), gap_trace_);
  }

 private:
  std::vector<double> gap_trace_;
};

namespace detail {

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace detail
}  // namespace dvi

#endif  // DVI_ERROR_HPP
