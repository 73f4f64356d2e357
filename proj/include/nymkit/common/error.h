#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nymkit {

// Error codes surfaced verbatim by the CLI and the control protocol.
enum class Errc {
  kNotFound,
  kInvalidArgument,
  kReadOnly,
  kOutOfRange,
  kTamperDetected,
  kDuplicateNym,
  kUnknownNode,
  kNoUplink,
  kNoRelays,
  kUnreachable,
  kNameNotFound,
  kBudgetExceeded,
  kModeForbidsStore,
  kModeMismatch,
  kIllegalTransition,
  kStoreRequired,
  kAuthFailure,
  kBadFormat,
  kNotAuthenticated,
  kBackendFailure,
  kKindMismatch,
  kUnresolvedRisk,
  kUnknownNym,
  kDriverMismatch,
  kNotApplicable,
  kStaleBase,
  kInsufficientData,
  kAddressInUse,
  kTimeout,
  kUsage,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace nymkit
