#include "nymkit/common/error.h"

namespace nymkit {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kNotFound: return "NotFound";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kReadOnly: return "ReadOnly";
    case Errc::kOutOfRange: return "OutOfRange";
    case Errc::kTamperDetected: return "TamperDetected";
    case Errc::kDuplicateNym: return "DuplicateNym";
    case Errc::kUnknownNode: return "UnknownNode";
    case Errc::kNoUplink: return "NoUplink";
    case Errc::kNoRelays: return "NoRelays";
    case Errc::kUnreachable: return "Unreachable";
    case Errc::kNameNotFound: return "NameNotFound";
    case Errc::kBudgetExceeded: return "BudgetExceeded";
    case Errc::kModeForbidsStore: return "ModeForbidsStore";
    case Errc::kModeMismatch: return "ModeMismatch";
    case Errc::kIllegalTransition: return "IllegalTransition";
    case Errc::kStoreRequired: return "StoreRequired";
    case Errc::kAuthFailure: return "AuthFailure";
    case Errc::kBadFormat: return "BadFormat";
    case Errc::kNotAuthenticated: return "NotAuthenticated";
    case Errc::kBackendFailure: return "BackendFailure";
    case Errc::kKindMismatch: return "KindMismatch";
    case Errc::kUnresolvedRisk: return "UnresolvedRisk";
    case Errc::kUnknownNym: return "UnknownNym";
    case Errc::kDriverMismatch: return "DriverMismatch";
    case Errc::kNotApplicable: return "NotApplicable";
    case Errc::kStaleBase: return "StaleBase";
    case Errc::kInsufficientData: return "InsufficientData";
    case Errc::kAddressInUse: return "AddressInUse";
    case Errc::kTimeout: return "Timeout";
    case Errc::kUsage: return "Usage";
  }
  return "Unknown";
}

}  // namespace nymkit
