#pragma once

#include <stdexcept>
#include <string>

namespace ranids {

// Error categories surface unchanged through the C API as status codes.
enum class ErrorKind {
  InvalidArgument,
  Parse,
  Io,
  Model,
  Network,
  Protocol,
  State,
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

} // namespace ranids
