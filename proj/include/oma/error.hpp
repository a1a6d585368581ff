#pragma once

#include <stdexcept>
#include <string>

namespace oma {

/// Failure category. The CLI maps these onto its exit codes.
enum class ErrorKind {
  usage,      ///< invalid argument or configuration value
  data,       ///< malformed, inconsistent or missing input data
  numerical,  ///< a solver could not produce a meaningful answer
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace oma
