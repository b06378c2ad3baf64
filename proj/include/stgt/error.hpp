#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace stgt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The finite-difference oracle hit a non-finite evaluation.
class OracleError : public Error {
 public:
  OracleError(const std::string& what, std::size_t coordinate)
      : Error(what), coordinate_(coordinate) {}
  std::size_t coordinate() const noexcept { return coordinate_; }

 private:
  std::size_t coordinate_;
};

/// An embedding collapsed to the zero vector and has no direction.
class DegenerateEmbedding : public Error {
 public:
  using Error::Error;
};

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace stgt
