#pragma once

#include <stdexcept>
#include <string>

namespace moaecr {

// Error categories map 1:1 onto CLI exit codes and C API status codes:
// usage/config/data problems -> 1, numerical aborts -> 2, failed checks -> 3.
struct Error : std::runtime_error {
  int code;
  Error(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error(1, msg) {}
};

struct ShapeError : UsageError {
  explicit ShapeError(const std::string& msg) : UsageError(msg) {}
};

struct ConfigError : UsageError {
  explicit ConfigError(const std::string& msg) : UsageError(msg) {}
};

struct DataError : UsageError {
  explicit DataError(const std::string& msg) : UsageError(msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(2, msg) {}
};

struct CheckFailure : Error {
  explicit CheckFailure(const std::string& msg) : Error(3, msg) {}
};

}  // namespace moaecr
