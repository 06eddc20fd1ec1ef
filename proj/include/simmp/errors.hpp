#pragma once

#include <stdexcept>
#include <string>

namespace simmp {

// Shapes or extents that do not fit together.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (bad argument value, wrong state of inputs).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Object used in the wrong lifecycle state, e.g. an uninitialized memory bank.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed, truncated or mismatched serialized data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN or Inf produced by an operation.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace simmp
