#pragma once

#include <stdexcept>
#include <string>

namespace cyclecap {

// A caller broke a documented precondition (empty input, shape mismatch,
// value out of range). Always a programming or data error, never transient.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Recoverable runtime failure (I/O, malformed files, exhausted corpus).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Config validation failure; the CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Checkpoint/config/dataset disagree on shapes; exit code 3.
class ArtifactMismatch : public Error {
 public:
  explicit ArtifactMismatch(const std::string& what) : Error(what) {}
};

// Non-finite loss or gradient; exit code 4.
class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& what) : Error(what) {}
};

inline void require(bool cond, const char* what) {
  if (!cond) throw ContractViolation(what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace cyclecap
