#pragma once

#include <stdexcept>
#include <string>

namespace imooe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Raised when a solver, rollout or loss produces NaN/Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace imooe
