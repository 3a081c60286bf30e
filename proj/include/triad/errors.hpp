#pragma once

#include <stdexcept>
#include <string>

namespace triad {

// Base class for all library errors so callers can catch one type.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/argument mismatches detected before any numerics run.
struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Whitening rejected the input: the pair matrix has fewer than r usable
// directions.  `ratio` is sigma_r/sigma_1, `gap` is sigma_r - sigma_{r+1}.
struct DeficientRankError : Error {
  DeficientRankError(const std::string& msg, double ratio_, double gap_)
      : Error(msg), ratio(ratio_), gap(gap_) {}
  double ratio;
  double gap;
};

// A matrix that must be inverted (or safely conditioned) is numerically singular.
struct SingularMatrixError : Error {
  explicit SingularMatrixError(const std::string& msg) : Error(msg) {}
};

// Iteration budget exhausted while a caller demanded convergence.
struct ConvergenceError : Error {
  ConvergenceError(const std::string& msg, double best_criterion_)
      : Error(msg), best_criterion(best_criterion_) {}
  double best_criterion;
};

// Malformed input file / config.
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Evaluation requested outside a basis' support interval.
struct DomainError : Error {
  explicit DomainError(const std::string& msg) : Error(msg) {}
};

}  // namespace triad
