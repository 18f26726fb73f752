#pragma once

#include <stdexcept>
#include <string>

namespace ltkd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied values are outside the accepted domain (non-finite logits, bad labels).
class InputError : public Error {
 public:
  using Error::Error;
};

/// An internal precondition or postcondition was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A grouping policy produced an empty or inconsistent partition.
class PartitionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; carries the 1-based line where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Binary file with the wrong magic, version or payload size.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss or parameter.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ltkd
