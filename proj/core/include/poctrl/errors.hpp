#pragma once

#include <stdexcept>
#include <string>

namespace poctrl {

// Malformed input: dimension mismatch, empty measure, out-of-range time, ...
struct InvalidArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Model rejected by the positivity/coercivity checks; solvers refuse to run.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The action-weight matrix lost uniform positivity somewhere on the grid.
// Deliberately not recovered from by regularization.
struct GammaSingularError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An iteration produced NaN or Inf.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace poctrl
