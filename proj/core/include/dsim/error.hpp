#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsim {

enum class ErrorCode {
  DimensionMismatch,
  DimensionTooLarge,
  NoValidAssignment,
  SingularBlock,
  UnboundedRay,
  InvalidProblem,
  InvalidModel,
  InvalidArgument,
  GrazingContact,
  ParseError,
};

std::string_view to_string(ErrorCode code);

/// Exception type thrown by every dsim module. The code lets callers (and the
/// CLI exit-status mapping) distinguish solver failures from bad input.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dsim
