#pragma once

#include <stdexcept>
#include <string>

namespace ssanova {

/// Malformed or out-of-contract input: bad files, bad arguments, bad shapes.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A factorization or optimization that cannot produce a usable answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InputError(message);
}

}  // namespace detail
}  // namespace ssanova
