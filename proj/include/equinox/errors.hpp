#pragma once

#include <stdexcept>
#include <string>

namespace equinox {

/// Invalid or inconsistent configuration (bad preset name, out-of-range
/// parameter, unknown config key). CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file (trace CSV, model JSON).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Model training failed (corpus too small, empty bucket).
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

/// Internal consistency violation detected during a simulation run.
class EngineError : public std::runtime_error {
 public:
  explicit EngineError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace equinox
