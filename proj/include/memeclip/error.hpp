#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace memeclip {

enum class ErrorCode {
  validation,
  format,
  corruption,
  io,
  dimension,
  index,
  lookup,
  configuration,
  numeric,
  data,
  state,
  undefined_metric,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; `code()` tells callers which
/// failure class they hit. The CLI maps codes onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace memeclip
