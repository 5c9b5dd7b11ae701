#pragma once

#include "metatest/dsl.hpp"
#include "metatest/metamodel.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace metatest::gen {

enum class CaseCategory {
  empty_required,
  empty_optional,
  at_min,
  at_max,
  below_min,
  above_max,
  interior,
  non_numeric,
  at_width,
  over_width,
  option_valid,
  option_invalid,
  checkbox_on,
  checkbox_off,
};

std::string_view to_string(CaseCategory category);

struct FieldCase {
  std::string field;
  std::optional<std::string> input; // nullopt: leave the field untouched
  ValidationOutcome expected;
  CaseCategory category;
  bool operator==(const FieldCase&) const = default;
};

/// Boundary, width, type-mismatch, option and emptiness cases for one field,
/// in CaseCategory order. Expected outcomes come from field_accepts.
std::vector<FieldCase> generate_field_cases(const FieldSpec& field);

/// A value that passes field_accepts, or nullopt for optional fields that
/// are best left empty. Throws Error(unsatisfiable) when a required field
/// has no such value.
std::optional<std::string> default_fill(const FieldSpec& field);

using FillStrategy = std::function<std::optional<std::string>(const FieldSpec&)>;

/// One suite per form: checkpoint, one open/clear/type/click/expect/
/// displayScreen block per case, and a final dbAdds assertion.
dsl::TestSuite generate_form_suite(const FormSpec& form, const AppSpec& app,
                                   const FillStrategy& fill = default_fill);

} // namespace metatest::gen
