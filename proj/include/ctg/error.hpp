#pragma once

#include <stdexcept>
#include <string>

namespace ctg {

/// Library-wide error. `kind` is a short machine-readable category that the
/// CLI reports alongside the message ("parse_error", "invalid_argument", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

[[noreturn]] inline void fail(const std::string& kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool cond, const std::string& kind, const std::string& message) {
  if (!cond) fail(kind, message);
}

}  // namespace ctg
