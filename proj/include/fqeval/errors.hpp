#pragma once

#include <stdexcept>
#include <string>

namespace fqeval {

/// Invalid dimensions, malformed probability rows, bad option combinations.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or wrong-schema input files.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or unreadable/unwritable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rank-deficient or otherwise unsolvable regression systems.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& msg, long deficient_rank = -1)
      : std::runtime_error(msg), deficient_rank(deficient_rank) {}
  long deficient_rank;
};

/// Non-finite values produced where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Singular plug-in covariance and similar estimation failures.
class InferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Monte-Carlo study failures (e.g. too many excluded replicates).
class StudyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fqeval
