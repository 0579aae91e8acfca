#pragma once

#include <stdexcept>
#include <string>

namespace edl {

// Failure categories. The CLI maps these onto its exit codes.
enum class ErrorKind {
  kInvalidInput,     // caller violated a precondition
  kConfig,           // bad configuration value or file
  kData,             // malformed or inconsistent dataset / checkpoint
  kNumeric,          // NaN / overflow during computation
  kUndefinedMetric,  // metric undefined for the given labels
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

}  // namespace edl
