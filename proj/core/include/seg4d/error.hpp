#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seg4d {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kNonFinite,
  kDetachedGraph,
  kBackwardTwice,
  kBadMagic,
  kTruncated,
  kDimensionOverflow,
  kUnsupportedFormat,
  kIo,
  kDuplicateId,
  kMissingFile,
  kConfig,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace seg4d
