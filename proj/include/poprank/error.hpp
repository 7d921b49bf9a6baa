#pragma once

#include <stdexcept>
#include <string>

namespace poprank {

/// Thrown when arguments violate a documented precondition or invariant.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace poprank
