#pragma once

#include <stdexcept>
#include <string>

namespace ax {

enum class ErrorKind {
  InvalidSpec,
  NotEnoughFreeCells,
  NoPath,
  NoFrontier,
  Deadlock,
  NonFiniteLoss,
  RefusesMismatched,
  CorruptLog,
  Config,
  Io,
};

const char* to_string(ErrorKind kind);

// Exception type for every recoverable failure in the library. The kind is
// stable and meant for dispatch; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ax
