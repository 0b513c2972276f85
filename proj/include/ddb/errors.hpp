#pragma once

#include <stdexcept>
#include <string>

namespace ddb {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (e.g. t > 1).
struct DomainError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// Tensor shapes do not match the operation's contract.
struct ShapeError : Error {
  using Error::Error;
};

// Request is valid but intentionally not implemented (IR-SDE reverse sampling).
struct UnsupportedError : Error {
  using Error::Error;
};

// Sampler iterate became non-finite; carries the grid index it happened at.
struct DivergenceError : Error {
  int step_index;
  DivergenceError(const std::string& msg, int index)
      : Error(msg), step_index(index) {}
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace ddb
