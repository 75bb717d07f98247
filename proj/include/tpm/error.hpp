#pragma once

#include <stdexcept>
#include <string>

namespace tpm {

// Coarse failure categories. The CLI maps each one to its own exit code.
enum class ErrorKind {
  kInvalidArgument,
  kConfig,
  kData,
  kDivergence,
  kModelFormat,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tpm
