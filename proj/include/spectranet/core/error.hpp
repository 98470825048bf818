#pragma once

#include <stdexcept>
#include <string>

namespace spectranet {

/// Process exit codes used by the command line tools.
enum class ExitCode : int {
  ok = 0,
  config = 2,
  missing_artifact = 3,
  numerical = 4,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  [[nodiscard]] virtual ExitCode exit_code() const noexcept { return ExitCode::config; }
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("configuration error: " + what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape error: " + what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("data error: " + what) {}
};

class SimulationError : public Error {
 public:
  explicit SimulationError(const std::string& what) : Error("simulation error: " + what) {}
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::numerical; }
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error("training error: " + what) {}
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::numerical; }
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& what) : Error("checkpoint error: " + what) {}
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::missing_artifact; }
};

/// An upstream stage has not produced the artifact a later stage needs.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(const std::string& artifact, const std::string& stage)
      : Error("missing artifact '" + artifact + "'; run the '" + stage + "' stage first") {}
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::missing_artifact; }
};

}  // namespace spectranet
