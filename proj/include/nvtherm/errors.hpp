#pragma once

#include <stdexcept>
#include <string>

namespace nvtherm {

// Error categories map 1:1 onto CLI exit codes and C-API status values.
enum class ErrorCode {
  config = 2,   // bad or inconsistent input (file, key, value, precondition)
  numeric = 3,  // solver/fit failure at runtime
  invalid = 4,  // misuse of the API (null handle, bad argument)
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, std::string msg)
      : std::runtime_error(std::move(msg)), code_(code) {}
  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(std::string msg) : Error(ErrorCode::config, std::move(msg)) {}
};

struct NumericError : Error {
  explicit NumericError(std::string msg) : Error(ErrorCode::numeric, std::move(msg)) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(std::string msg) : Error(ErrorCode::invalid, std::move(msg)) {}
};

}  // namespace nvtherm
