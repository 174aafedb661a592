#include "sealedrules/error.h"

namespace sealedrules {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSyntax: return "SyntaxError";
    case ErrorCode::kSchema: return "SchemaError";
    case ErrorCode::kAuthentication: return "AuthenticationError";
    case ErrorCode::kKeyMismatch: return "KeyMismatch";
    case ErrorCode::kNonceExhausted: return "NonceExhausted";
    case ErrorCode::kBinding: return "BindingError";
    case ErrorCode::kAttestationRejected: return "AttestationRejected";
    case ErrorCode::kModeChangeWhileBusy: return "ModeChangeWhileBusy";
    case ErrorCode::kNotConnected: return "NotConnected";
    case ErrorCode::kTopicInvalid: return "TopicInvalid";
    case ErrorCode::kPatternInvalid: return "PatternInvalid";
    case ErrorCode::kBackpressure: return "Backpressure";
    case ErrorCode::kBrokerUnreachable: return "BrokerUnreachable";
    case ErrorCode::kUnknownCommand: return "UnknownCommand";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kTracingDisabled: return "TracingDisabled";
    case ErrorCode::kEmptyTrace: return "EmptyTrace";
    case ErrorCode::kAlphabetMismatch: return "AlphabetMismatch";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kBind: return "BindError";
    case ErrorCode::kPublish: return "PublishError";
    case ErrorCode::kTimeout: return "TimeoutError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Error";
}

}  // namespace sealedrules
