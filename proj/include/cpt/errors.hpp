#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cpt {

/// Vector length does not match the model's feature dimension (d+1 with bias).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tree topology violates a structural invariant.
class StructureError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Operation requires state the object does not have yet (e.g. unfinalized leaves).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A non-finite value appeared during evaluation or optimization.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Text input could not be parsed; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Every candidate cut separates identical probabilities; the node cannot split.
class DegenerateSplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Metric is undefined on the given data (e.g. AUC with a single class present).
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cpt
