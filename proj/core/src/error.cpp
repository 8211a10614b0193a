#include "dsim/error.hpp"

namespace dsim {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::NoValidAssignment: return "NoValidAssignment";
    case ErrorCode::SingularBlock: return "SingularBlock";
    case ErrorCode::UnboundedRay: return "UnboundedRay";
    case ErrorCode::InvalidProblem: return "InvalidProblem";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::GrazingContact: return "GrazingContact";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace dsim
