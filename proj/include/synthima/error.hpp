#pragma once

#include <stdexcept>
#include <string>

namespace synthima {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied value is outside the operation's domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or codec failure while reading/writing images or weights.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace synthima
