#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace drmww {

/// Failure categories. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  validation = 2,
  estimability = 3,
  convergence = 4,
  io = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

/// Invalid argument to a numeric routine (non-finite input, bad parameter).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error(ErrorKind::validation, what) {}
};

/// Malformed input file. `row` is the 1-based data row (0 when not row-specific).
class IngestError : public Error {
 public:
  IngestError(const std::string& what, std::size_t row = 0)
      : Error(ErrorKind::validation, what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

/// The requested quantity cannot be estimated from this data (single arm,
/// no discordant pairs, singular design, separation).
class EstimabilityError : public Error {
 public:
  explicit EstimabilityError(const std::string& what)
      : Error(ErrorKind::estimability, what) {}
};

/// An iterative solver stopped without meeting its tolerance. Carries the
/// last iterate and residual so callers can inspect or report them.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> last_iterate,
                   double residual)
      : Error(ErrorKind::convergence, what),
        last_iterate_(std::move(last_iterate)),
        residual_(residual) {}

  const std::vector<double>& last_iterate() const noexcept {
    return last_iterate_;
  }
  double residual() const noexcept { return residual_; }

 private:
  std::vector<double> last_iterate_;
  double residual_;
};

}  // namespace drmww
