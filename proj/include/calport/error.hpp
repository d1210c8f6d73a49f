#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace calport {

enum class ErrorCode {
  kInvalidParams,
  kCapExceeded,
  kOutOfRange,
  kIndexOutOfRange,
  kInfeasible,
  kNonConvergence,
  kProtocolViolation,
  kEmptyHistory,
  kUnsupported,
  kQuadratureUnstable,
  kMarketContractViolation,
  kParseError,
  kRangeError,
  kConfigError,
  kIoError,
};

std::string_view ErrorCodeName(ErrorCode code);

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace calport
