#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coct {

enum class ErrorCode {
  NotFound,
  InvalidArgument,
  UnclosedTag,
  UnknownConcept,
  Transport,
  Protocol,
  Refusal,
  MockMiss,
  EmptyInput,
  EmptyCorpus,
  LengthMismatch,
  DuplicateId,
  Schema,
  UnsupportedFormat,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace coct
