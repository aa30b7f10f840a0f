#pragma once

#include <stdexcept>
#include <string>

namespace fedbac {

// Bad runtime data handed to an operation (empty dataset, label out of range, ...).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent configuration or dimension mismatch between configured components.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A protocol contract was violated (wrong number of contributions, ...).
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// A condition the implementation guarantees unreachable was reached.
struct InternalError : std::logic_error {
  explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace fedbac
