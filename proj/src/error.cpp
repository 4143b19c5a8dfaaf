#include "memeclip/error.hpp"

namespace memeclip {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::validation: return "validation error";
    case ErrorCode::format: return "format error";
    case ErrorCode::corruption: return "corruption error";
    case ErrorCode::io: return "I/O error";
    case ErrorCode::dimension: return "dimension error";
    case ErrorCode::index: return "index error";
    case ErrorCode::lookup: return "lookup error";
    case ErrorCode::configuration: return "configuration error";
    case ErrorCode::numeric: return "numeric error";
    case ErrorCode::data: return "data error";
    case ErrorCode::state: return "state error";
    case ErrorCode::undefined_metric: return "undefined metric";
  }
  return "error";
}

}  // namespace memeclip
