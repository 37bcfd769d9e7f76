#pragma once

#include <stdexcept>
#include <string>

namespace cachebar {

// Invalid configuration or malformed input (geometry, PMFs, traces, CLI).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation invoked on a state that does not permit it.
class LogicError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Access through a virtual page that has no mapping.
class FaultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A reserved-bit fault that is neither COA nor NC; escalated to the generic handler.
class UnknownFaultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A structural invariant check failed.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace cachebar
