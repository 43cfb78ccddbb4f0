#pragma once

#include <stdexcept>
#include <string>

namespace blockpf {

// Base of every library error. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A product space, vertex count or enumeration exceeded a configured cap.
class SizeError : public Error {
 public:
  using Error::Error;
};

// Bad configuration or model file content.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Structural validation failure (overlapping blocks, incomplete cover...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// API misuse: shape mismatch, wrong ensemble mode, J spanning blocks.
class UsageError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// A mathematical precondition of a bound (Dobrushin condition, domination)
// does not hold, so the bound is not asserted.
class ConditionFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace blockpf
