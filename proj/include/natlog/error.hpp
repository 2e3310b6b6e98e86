#pragma once

#include <stdexcept>
#include <string>

namespace natlog {

/// A precondition of an operation was not met by its caller.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed textual input: sentences, trees, relation tokens, JSON.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally valid data that fails a semantic invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace natlog
