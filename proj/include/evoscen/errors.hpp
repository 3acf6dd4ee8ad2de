#pragma once

#include <stdexcept>
#include <string>

namespace evoscen {

/// Invalid configuration or command-line input (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spawn could not place all vehicles in the initialization area.
class SpawnError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// A caller broke an operation's precondition (CLI exit code 3).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evoscen
