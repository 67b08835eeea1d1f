#pragma once

#include <stdexcept>
#include <string>

namespace ipprobe {

// Maps onto CLI exit codes: 1 config/validation, 2 backend, 3 statistics.
enum class ErrorCategory {
  Config = 1,
  Validation = 1,
  Backend = 2,
  Statistics = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what),
        category_(category),
        code_(std::move(code)),
        message_(what) {}

  ErrorCategory category() const noexcept { return category_; }
  // Short machine tag, e.g. "VariantMismatch".
  const std::string& code() const noexcept { return code_; }
  // what() without the code prefix.
  const std::string& message() const noexcept { return message_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
  std::string code_;
  std::string message_;
};

inline Error config_error(const std::string& what) {
  return Error(ErrorCategory::Config, "ConfigError", what);
}

inline Error validation_error(std::string code, const std::string& what) {
  return Error(ErrorCategory::Validation, std::move(code), what);
}

inline Error backend_error(std::string code, const std::string& what) {
  return Error(ErrorCategory::Backend, std::move(code), what);
}

inline Error stats_error(std::string code, const std::string& what) {
  return Error(ErrorCategory::Statistics, std::move(code), what);
}

}  // namespace ipprobe
