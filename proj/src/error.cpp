#include "calport/error.hpp"

namespace calport {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidParams: return "InvalidParams";
    case ErrorCode::kCapExceeded: return "CapExceeded";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kNonConvergence: return "NonConvergence";
    case ErrorCode::kProtocolViolation: return "ProtocolViolation";
    case ErrorCode::kEmptyHistory: return "EmptyHistory";
    case ErrorCode::kUnsupported: return "Unsupported";
    case ErrorCode::kQuadratureUnstable: return "QuadratureUnstable";
    case ErrorCode::kMarketContractViolation: return "MarketContractViolation";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kRangeError: return "RangeError";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace calport
