#pragma once

#include <stdexcept>
#include <string>

namespace branchy {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between tensors/layers.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid value, configuration or argument.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed input file or text (carries offsets/line numbers in the message).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in a state that does not support it (e.g. backward
// without a forward cache).
class StateError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace branchy
