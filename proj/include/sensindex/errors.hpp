#pragma once

#include <stdexcept>
#include <string>

namespace sensindex {

// Exit codes used by the CLI; library exceptions carry the matching code so
// the tool can translate failures without a taxonomy of catch blocks.
//   0  success
//   1  verification suite failed
//   2  input parse error (CSV/JSON)
//   3  ties present under tie_policy=error
//   4  degenerate variance (denominator below threshold)
//   5  quadrature failed to converge / inner moment budget exceeded
//   64 usage error (bad flags, unknown model/suite, invalid level)
enum ExitCode : int {
  exit_ok = 0,
  exit_suite_failed = 1,
  exit_parse_error = 2,
  exit_ties_present = 3,
  exit_degenerate_variance = 4,
  exit_quadrature_not_converged = 5,
  exit_usage = 64,
};

struct Error : std::runtime_error {
  int exit_code;
  Error(int code, const std::string& msg) : std::runtime_error(msg), exit_code(code) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(exit_parse_error, msg) {}
};

struct TiesPresent : Error {
  explicit TiesPresent(const std::string& msg) : Error(exit_ties_present, msg) {}
};

struct NonFinite : Error {
  explicit NonFinite(const std::string& msg) : Error(exit_parse_error, msg) {}
};

struct DegenerateVariance : Error {
  explicit DegenerateVariance(const std::string& msg) : Error(exit_degenerate_variance, msg) {}
};

struct QuadratureNotConverged : Error {
  explicit QuadratureNotConverged(const std::string& msg) : Error(exit_quadrature_not_converged, msg) {}
};

struct InnerBudgetExceeded : Error {
  explicit InnerBudgetExceeded(const std::string& msg) : Error(exit_quadrature_not_converged, msg) {}
};

struct InvalidConditionalCdf : Error {
  explicit InvalidConditionalCdf(const std::string& msg) : Error(exit_parse_error, msg) {}
};

struct UnknownModel : Error {
  explicit UnknownModel(const std::string& msg) : Error(exit_usage, msg) {}
};

struct InvalidLevel : Error {
  explicit InvalidLevel(const std::string& msg) : Error(exit_usage, msg) {}
};

struct TooFewValues : Error {
  explicit TooFewValues(const std::string& msg) : Error(exit_usage, msg) {}
};

// Signals an implementation bug (a verified algebraic bound failed), not bad input.
struct BoundViolated : Error {
  explicit BoundViolated(const std::string& msg) : Error(exit_suite_failed, msg) {}
};

}  // namespace sensindex
