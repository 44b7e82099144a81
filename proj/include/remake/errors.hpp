#pragma once

#include <stdexcept>
#include <string>

namespace remake {

// Exit codes used by the CLI. Library code throws the typed errors below;
// the CLI maps them to these codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitDataError = 3,
  kExitNumericError = 4,
};

// Invalid configuration: bad model dimensions, nonpositive thresholds,
// malformed config files.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Problems with input data: missing files, shape mismatches, values outside
// the documented domain.
class DataError : public std::runtime_error {
 public:
  enum class Kind {
    kMissingFile,
    kMissingGroundTruth,
    kShapeMismatch,
    kMalformedMeta,
    kInvalidValue,
    kEmptyRegion,
    kIo,
  };

  DataError(Kind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Numeric failures during optimization or evaluation (NaN loss, divergence).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace remake
