#pragma once

#include <stdexcept>
#include <string>

namespace dawood {

// Failure categories map one-to-one onto the CLI exit codes.
enum class ErrorKind { usage = 2, data = 3, internal = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

// Bad input: malformed manifests, unreadable images, out-of-range arguments.
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

// Invalid configuration or command-line values.
struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

// Broken invariant inside the library (routing or bookkeeping bug).
struct InternalError : Error {
  explicit InternalError(const std::string& what)
      : Error(ErrorKind::internal, what) {}
};

}  // namespace dawood
