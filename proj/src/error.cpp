#include "metatest/error.hpp"

namespace metatest {

std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::invalid_argument: return "invalid_argument";
  case ErrorCode::syntax: return "syntax";
  case ErrorCode::duplicate_key: return "duplicate_key";
  case ErrorCode::unknown_data_type: return "unknown_data_type";
  case ErrorCode::schema: return "schema";
  case ErrorCode::invalid_metadata: return "invalid_metadata";
  case ErrorCode::navigation: return "navigation";
  case ErrorCode::element_not_found: return "element_not_found";
  case ErrorCode::locator: return "locator";
  case ErrorCode::no_form: return "no_form";
  case ErrorCode::unknown_label: return "unknown_label";
  case ErrorCode::dsl: return "dsl";
  case ErrorCode::unsatisfiable: return "unsatisfiable";
  case ErrorCode::unknown_run: return "unknown_run";
  case ErrorCode::integrity: return "integrity";
  case ErrorCode::incomparable_runs: return "incomparable_runs";
  case ErrorCode::connection: return "connection";
  case ErrorCode::corrupt_log: return "corrupt_log";
  case ErrorCode::empty_log: return "empty_log";
  case ErrorCode::ambiguous_key: return "ambiguous_key";
  case ErrorCode::metadata_mismatch: return "metadata_mismatch";
  case ErrorCode::io: return "io";
  case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

namespace {

std::string decorate(const std::string& message, int line, int column) {
  if (line <= 0)
    return message;
  std::string prefix = "line " + std::to_string(line);
  if (column > 0)
    prefix += ", column " + std::to_string(column);
  return prefix + ": " + message;
}

} // namespace

Error::Error(ErrorCode code, const std::string& message, int line, int column)
    : std::runtime_error(decorate(message, line, column)), code_(code), line_(line),
      column_(column) {}

} // namespace metatest
