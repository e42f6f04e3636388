#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aastereo {

// Shape or extent disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or unsupported file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what
                                     : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Thrown by the trainer when a loss evaluates to NaN/Inf.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(std::size_t step, double value)
      : std::runtime_error("non-finite loss " + std::to_string(value) +
                           " at step " + std::to_string(step)),
        step_(step) {}

  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Evaluation over zero valid pixels.
class EmptyEvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aastereo
