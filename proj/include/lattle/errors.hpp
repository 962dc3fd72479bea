#pragma once

#include <stdexcept>
#include <string>

namespace lattle {

// Error categories map to CLI exit codes:
//   1 usage/config, 2 data, 3 training/numeric, 4 contract violation.
class Error : public std::runtime_error {
 public:
  Error(const std::string& msg, int exit_code)
      : std::runtime_error(msg), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(m, 1) {}
};

struct DataError : Error {
  explicit DataError(const std::string& m) : Error(m, 2) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& m) : Error(m, 3) {}
};

// Frozen-weight mutation and similar broken guarantees.
struct ContractError : Error {
  explicit ContractError(const std::string& m) : Error(m, 4) {}
};

// Tensor shape/geometry mismatches (bad model geometry is a config problem).
struct ShapeError : ConfigError {
  explicit ShapeError(const std::string& m) : ConfigError(m) {}
};

// Out-of-range labels, token ids, layer indices.
struct IndexError : DataError {
  explicit IndexError(const std::string& m) : DataError(m) {}
};

// NaN/Inf encountered where finite values are required.
struct NumericError : TrainingError {
  explicit NumericError(const std::string& m) : TrainingError(m) {}
};

enum class CheckpointErrorKind { BadMagic, BadVersion, Truncated, SizeMismatch, WrongKind };

struct CheckpointError : DataError {
  CheckpointError(CheckpointErrorKind kind, const std::string& m)
      : DataError(m), kind(kind) {}
  CheckpointErrorKind kind;
};

}  // namespace lattle
