#pragma once

#include <stdexcept>
#include <string>

namespace identikit {

// Error categories map one-to-one onto the C API status codes and the CLI
// exit codes (config 2, identification 3, numerical 4).
enum class ErrorKind {
  InvalidArgument = 1,
  Config = 2,
  Identification = 3,
  Numerical = 4,
  Io = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what,
                    ErrorKind kind = ErrorKind::InvalidArgument) {
  if (!cond) throw Error(kind, what);
}

}  // namespace identikit
