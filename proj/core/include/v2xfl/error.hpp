#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace v2xfl {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// IDX parsing.
class FormatError : public Error {
 public:
  using Error::Error;
};

class LengthError : public Error {
 public:
  using Error::Error;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  InsufficientDataError(std::size_t label, std::size_t available, std::size_t requested);

  std::size_t label() const noexcept { return label_; }

 private:
  std::size_t label_;
};

class UnsupportedConfigError : public Error {
 public:
  using Error::Error;
};

class InfeasibleConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised when a training step produces a non-finite loss or gradient.
class NumericalDivergence : public Error {
 public:
  NumericalDivergence(std::size_t batch_index, const std::string& what);

  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

class RoutingError : public Error {
 public:
  using Error::Error;
};

class AggregationError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Invalid campaign configuration. `line` is 1-based, 0 when the problem
/// has no source position (e.g. a command-line override).
class ConfigError : public Error {
 public:
  ConfigError(std::size_t line, const std::string& what);

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace v2xfl
