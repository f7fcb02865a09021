#pragma once

#include <stdexcept>
#include <string>

namespace godhs {

/// Raised when an input file fails to parse (scene, config, suite, ...).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when parsed data violates its schema invariants.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on bad arguments to library operations.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a remote endpoint cannot be reached or answers with a
/// non-success status or an unreadable body. Distinct from invalid content,
/// which consumes retry budget instead of aborting the request.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace godhs
