#pragma once

#include <stdexcept>
#include <string>

namespace spindefect {

/// Input violates an operation's precondition. Maps to CLI exit status 2.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// A computation could not produce a trustworthy result (internal check
/// failed, solver diverged). Maps to CLI exit status 3.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spindefect
