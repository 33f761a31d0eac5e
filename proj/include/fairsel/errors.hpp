#pragma once

#include <stdexcept>
#include <string>

namespace fairsel {

// Bad input: malformed files, invalid configuration, violated preconditions.
// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or other failures during numeric work (exit code 2).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A fairness term was requested on a batch where a comparison group is empty.
class DegenerateBatchError : public std::domain_error {
 public:
  DegenerateBatchError() : std::domain_error("degenerate batch") {}
  explicit DegenerateBatchError(const std::string& detail)
      : std::domain_error("degenerate batch: " + detail) {}
};

// Relative gain against a baseline whose reference quantity is zero.
class UndefinedGainError : public std::domain_error {
 public:
  explicit UndefinedGainError(const std::string& detail)
      : std::domain_error("undefined relative gain: " + detail) {}
};

}  // namespace fairsel
