#pragma once

#include <stdexcept>
#include <string>

namespace bmode {

enum class ErrorKind {
  kInvalidInput,  // caller supplied something that violates a contract
  kDegenerate,    // input is well-formed but numerically unusable
  kIo,            // filesystem / format problems
  kRuntime,       // backend failure (model runtime, convergence)
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

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::kInvalidInput, what);
}

}  // namespace bmode
