#pragma once

#include "metatest/decimal.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace metatest {

enum class DataType { integer, numeric, text, checkbox, select_list };

std::string_view to_string(DataType type);
std::optional<DataType> parse_data_type(std::string_view text);

enum class FailureCode {
  missing_required,
  not_integer,
  not_numeric,
  below_min,
  above_max,
  too_wide,
  not_an_option,
  bad_checkbox,
};

std::string_view to_string(FailureCode code);
std::optional<FailureCode> parse_failure_code(std::string_view text);

/// Letters, digits and underscore; must not start with a digit.
bool is_identifier(std::string_view text);

/// Count of Unicode scalar values in a UTF-8 string.
std::size_t utf8_length(std::string_view text);

struct FieldSpec {
  std::string entity_name;
  DataType data_type = DataType::text;
  bool required = false;
  std::optional<std::int64_t> max_width;
  std::optional<Decimal> min_value;
  std::optional<Decimal> max_value;
  std::optional<std::vector<std::string>> options;
  std::optional<std::string> label;

  bool is_number() const noexcept {
    return data_type == DataType::integer || data_type == DataType::numeric;
  }
  bool operator==(const FieldSpec&) const = default;
};

struct FormSpec {
  std::string form_id;
  std::string url_path;
  std::string submit_name;
  std::vector<FieldSpec> fields;

  const FieldSpec* find_field(std::string_view entity_name) const;
  bool operator==(const FormSpec&) const = default;
};

struct AppSpec {
  std::string app_id;
  std::vector<FormSpec> forms;

  const FormSpec* find_form(std::string_view form_id) const;
  const FormSpec* find_form_by_url(std::string_view url_path) const;
  bool operator==(const AppSpec&) const = default;
};

enum class Severity { error, warning };

struct MetadataDiagnostic {
  Severity severity = Severity::error;
  std::string location; // app/form/field path
  std::string message;
};

bool has_errors(const std::vector<MetadataDiagnostic>& diagnostics);

struct FieldFailure {
  std::string field;
  FailureCode code;
  bool operator==(const FieldFailure&) const = default;
};

struct ValidationOutcome {
  bool accepted = true;
  std::vector<FieldFailure> failures;

  bool operator==(const ValidationOutcome&) const = default;
};

/// Parses the JSON metadata document. Throws Error with code syntax (with
/// line/column), duplicate_key, unknown_data_type or schema.
AppSpec parse_app_spec(std::string_view source);

/// Canonical form: fixed key order, two-space indentation.
std::string serialize_app_spec(const AppSpec& app);

/// Every invariant violation, as error diagnostics. Never throws.
std::vector<MetadataDiagnostic> validate_app_spec(const AppSpec& app);

/// Submit-time validation of one raw value. Absent and empty are both
/// "empty"; raw values are never trimmed.
ValidationOutcome field_accepts(const FieldSpec& field, const std::optional<std::string>& raw);

/// Validation of a whole form; fields missing from `values` are absent.
ValidationOutcome form_accepts(const FormSpec& form, const std::map<std::string, std::string>& values);

/// The per-form JSON fragment served by the wire protocol, and its inverse.
std::string form_descriptor(const FormSpec& form);
FormSpec parse_form_descriptor(std::string_view json);

/// "name=<identifier>", the only locator strategy.
class Locator {
public:
  static Locator parse(std::string_view text);
  static Locator by_name(std::string name);

  const std::string& name() const noexcept { return name_; }
  std::string text() const { return "name=" + name_; }
  bool operator==(const Locator&) const = default;

private:
  explicit Locator(std::string name) : name_(std::move(name)) {}
  std::string name_;
};

} // namespace metatest
