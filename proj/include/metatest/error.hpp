#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace metatest {

enum class ErrorCode {
  invalid_argument = 1,
  syntax,
  duplicate_key,
  unknown_data_type,
  schema,
  invalid_metadata,
  navigation,
  element_not_found,
  locator,
  no_form,
  unknown_label,
  dsl,
  unsatisfiable,
  unknown_run,
  integrity,
  incomparable_runs,
  connection,
  corrupt_log,
  empty_log,
  ambiguous_key,
  metadata_mismatch,
  io,
  internal,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. `line`/`column` are 1-based and
/// zero when the error has no source position.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message, int line = 0, int column = 0);

  ErrorCode code() const noexcept { return code_; }
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

private:
  ErrorCode code_;
  int line_;
  int column_;
};

} // namespace metatest
