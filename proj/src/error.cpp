#include "splitwise/error.hpp"

namespace splitwise {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidShape: return "invalid-shape";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kInvalidModel: return "invalid-model";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kBudgetInfeasible: return "budget-infeasible";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kUnsupportedVersion: return "unsupported-version";
    case ErrorCode::kFraming: return "framing";
    case ErrorCode::kHandshake: return "handshake";
    case ErrorCode::kTransport: return "transport";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace splitwise
