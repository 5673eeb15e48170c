#pragma once

#include <stdexcept>
#include <string>

namespace kostpm {

/// Invalid input to a library operation (bad dimensions, violated preconditions).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a trustworthy result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reference integrator failure (step-size underflow, non-finite state).
class IntegrationError : public NumericError {
 public:
  using NumericError::NumericError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) {
    throw InvalidArgument(message);
  }
}

}  // namespace detail
}  // namespace kostpm
