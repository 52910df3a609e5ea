#pragma once

#include <stdexcept>
#include <string>

namespace starnet {

// Base of every error the library throws. The CLI maps the concrete type to
// an exit code (see tools/starnet.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape mismatch, bad geometry).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// A file exists but its bytes are not what the format requires.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bad configuration or dataset description (empty index, mismatched checkpoint).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed invocation (too few input frames and similar).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Non-finite values showed up during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {

[[noreturn]] inline void contract_failure(const char* expr, const std::string& msg) {
  throw ContractViolation(msg + " (" + expr + ")");
}

}  // namespace detail
}  // namespace starnet

#define STARNET_EXPECT(cond, msg)                               \
  do {                                                          \
    if (!(cond)) ::starnet::detail::contract_failure(#cond, msg); \
  } while (false)
