#pragma once

#include <stdexcept>
#include <string>

namespace eendvc {

// Malformed text input (RTTM, UEM, CSV, config).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated binary file (FEAT, checkpoints, WAV).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments outside the accepted domain.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf encountered in a computation, or an undefined numerical result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace eendvc
