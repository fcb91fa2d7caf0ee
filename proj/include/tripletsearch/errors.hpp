#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tripletsearch {

/// Caller passed arguments of the wrong shape or outside an operation's domain.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A vector whose norm is too small for cosine similarity; usually an
/// embedding collapse.
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (sampler, trainer, synthetic generator, CLI run).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed dataset or checkpoint file. `line()` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DuplicateIdError : public std::runtime_error {
 public:
  explicit DuplicateIdError(const std::string& id)
      : std::runtime_error("duplicate image_id '" + id + "'"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

/// Raised when an optimizer step would leave non-finite parameters.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tripletsearch
