#pragma once

#include <stdexcept>
#include <string>

namespace mexit {

/// Base of every error thrown by the library. `code()` is a short stable
/// identifier used by the CLI's machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape_mismatch", what) {}
};

/// A caller broke an API contract (gradient for a frozen parameter, stale
/// activation cache, gradient routed into a frozen backbone).
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what) : Error("contract_violation", what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format_error", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io_error", what) {}
};

}  // namespace mexit
