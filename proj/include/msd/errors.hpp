#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace msd {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// A computation produced NaN or Inf. `component` is the offending vector
// entry, or -1 when the failure is not tied to a single entry.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int component = -1)
      : Error(what), component_(component) {}
  int component() const { return component_; }

 private:
  int component_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class UnsupportedSchemeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, double last_finite_loss, std::size_t iteration)
      : Error(what), last_finite_loss_(last_finite_loss), iteration_(iteration) {}
  double last_finite_loss() const { return last_finite_loss_; }
  std::size_t iteration() const { return iteration_; }

 private:
  double last_finite_loss_;
  std::size_t iteration_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class UndefinedReferenceError : public Error {
 public:
  using Error::Error;
};

// Raised by the experiment runner; names the pipeline stage that failed.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace msd
