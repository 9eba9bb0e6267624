#pragma once

#include <stdexcept>
#include <string>

namespace neuroverb {

// Base class for every error raised by the library. Each subclass maps to one
// failure category so callers (and the CLI exit-code logic) can dispatch on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

class WriteError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// Raised when a NaN or infinity shows up in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace neuroverb
