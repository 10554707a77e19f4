#pragma once

#include <stdexcept>
#include <string>

namespace besplat {

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// log() called on a rotation at or beyond the principal-branch cutoff.
struct BranchAmbiguity : std::domain_error {
  using std::domain_error::domain_error;
};

struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace besplat
