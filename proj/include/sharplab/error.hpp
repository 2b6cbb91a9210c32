#pragma once

#include <stdexcept>
#include <string>

namespace sharplab {

enum class ErrorKind {
  kShape,
  kInvalidArgument,
  kNumeric,
  kConfig,
  kIo,
  kNotFound,
  kParse,
};

const char* to_string(ErrorKind kind);

/// Exception carrying a coarse category; the CLI maps categories to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace sharplab
