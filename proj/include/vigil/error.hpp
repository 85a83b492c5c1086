#pragma once

#include <stdexcept>

namespace vigil {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable or malformed input/output. CLI exit code 2.
struct IoError : Error {
  using Error::Error;
};

// Unknown key, bad value or inconsistent settings. CLI exit code 3.
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite loss or network output. CLI exit code 4.
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace vigil
