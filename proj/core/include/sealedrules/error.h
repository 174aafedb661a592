#ifndef SEALEDRULES_ERROR_H_
#define SEALEDRULES_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace sealedrules {

enum class ErrorCode {
  kSyntax,
  kSchema,
  kAuthentication,
  kKeyMismatch,
  kNonceExhausted,
  kBinding,
  kAttestationRejected,
  kModeChangeWhileBusy,
  kNotConnected,
  kTopicInvalid,
  kPatternInvalid,
  kBackpressure,
  kBrokerUnreachable,
  kUnknownCommand,
  kInvalidConfig,
  kTracingDisabled,
  kEmptyTrace,
  kAlphabetMismatch,
  kConfig,
  kBind,
  kPublish,
  kTimeout,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

// Base of every error thrown by the library. Callers that only need the
// category can catch Error and inspect code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

template <ErrorCode kCode>
class CodedError : public Error {
 public:
  explicit CodedError(const std::string& message) : Error(kCode, message) {}
};

using SyntaxError = CodedError<ErrorCode::kSyntax>;
using SchemaError = CodedError<ErrorCode::kSchema>;
using AuthenticationError = CodedError<ErrorCode::kAuthentication>;
using KeyMismatch = CodedError<ErrorCode::kKeyMismatch>;
using NonceExhausted = CodedError<ErrorCode::kNonceExhausted>;
using BindingError = CodedError<ErrorCode::kBinding>;
using AttestationRejected = CodedError<ErrorCode::kAttestationRejected>;
using ModeChangeWhileBusy = CodedError<ErrorCode::kModeChangeWhileBusy>;
using NotConnected = CodedError<ErrorCode::kNotConnected>;
using TopicInvalid = CodedError<ErrorCode::kTopicInvalid>;
using PatternInvalid = CodedError<ErrorCode::kPatternInvalid>;
using Backpressure = CodedError<ErrorCode::kBackpressure>;
using BrokerUnreachable = CodedError<ErrorCode::kBrokerUnreachable>;
using UnknownCommand = CodedError<ErrorCode::kUnknownCommand>;
using InvalidConfig = CodedError<ErrorCode::kInvalidConfig>;
using TracingDisabled = CodedError<ErrorCode::kTracingDisabled>;
using EmptyTrace = CodedError<ErrorCode::kEmptyTrace>;
using AlphabetMismatch = CodedError<ErrorCode::kAlphabetMismatch>;
using ConfigError = CodedError<ErrorCode::kConfig>;
using BindError = CodedError<ErrorCode::kBind>;
using PublishError = CodedError<ErrorCode::kPublish>;
using TimeoutError = CodedError<ErrorCode::kTimeout>;
using IoError = CodedError<ErrorCode::kIo>;

}  // namespace sealedrules

#endif  // SEALEDRULES_ERROR_H_
