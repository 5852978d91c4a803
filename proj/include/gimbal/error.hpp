#pragma once

#include <stdexcept>
#include <string>

namespace gimbal {

/// Failure categories. The numeric value doubles as the CLI exit code.
enum class ErrorKind : int {
  io = 1,
  config = 2,
  numeric = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

/// File could not be read, written, or decoded.
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

/// Parameter outside its domain (bad FOV, mismatched shapes, even kernels...).
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Degenerate numerical input: empty overlaps, NaNs, diverged training.
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

}  // namespace gimbal
