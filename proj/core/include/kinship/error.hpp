#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kinship {

/// Base of every error the library throws. `kind()` is a short stable tag
/// used by the CLI for its one-line machine-parsable error output.
class Error : public std::runtime_error {
 public:
  Error(std::string_view kind, const std::string& message);
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Shape or length disagreement between operands.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message) : Error("dimension", message) {}
};

// Model/stage configuration that cannot be realized (indivisible extents, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

// Out-of-domain scalar parameter (eps <= 0, negative weight, ...).
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& message) : Error("parameter", message) {}
};

// Caller broke an API precondition (non-scalar loss, double backward, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& message) : Error("contract", message) {}
};

// Non-finite value produced while evaluating a function or loss.
class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string& message) : Error("evaluation", message) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& location, const std::string& message);
  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

// Prediction/label sets that do not share the expected pair_id universe.
class JoinError : public Error {
 public:
  explicit JoinError(const std::string& message) : Error("join", message) {}
};

// Metric undefined for the input (one-class labels, constant vector, ...).
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& message) : Error("undefined-metric", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

}  // namespace kinship
