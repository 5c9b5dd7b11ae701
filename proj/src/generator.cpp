#include "metatest/generator.hpp"

#include "metatest/error.hpp"

#include <algorithm>
#include <set>

namespace metatest::gen {

std::string_view to_string(CaseCategory category) {
  switch (category) {
  case CaseCategory::empty_required: return "empty_required";
  case CaseCategory::empty_optional: return "empty_optional";
  case CaseCategory::at_min: return "at_min";
  case CaseCategory::at_max: return "at_max";
  case CaseCategory::below_min: return "below_min";
  case CaseCategory::above_max: return "above_max";
  case CaseCategory::interior: return "interior";
  case CaseCategory::non_numeric: return "non_numeric";
  case CaseCategory::at_width: return "at_width";
  case CaseCategory::over_width: return "over_width";
  case CaseCategory::option_valid: return "option_valid";
  case CaseCategory::option_invalid: return "option_invalid";
  case CaseCategory::checkbox_on: return "checkbox_on";
  case CaseCategory::checkbox_off: return "checkbox_off";
  }
  return "interior";
}

namespace {

constexpr const char* kNonNumeric = "abc";
constexpr const char* kNotAnOption = "__NOT_AN_OPTION__";

// Left-pads a number rendering with zeros (after any sign) to `width`.
std::optional<std::string> pad_to(const std::string& rendering, std::size_t width) {
  if (rendering.size() > width)
    return std::nullopt;
  std::size_t at = (!rendering.empty() && rendering.front() == '-') ? 1 : 0;
  std::string out = rendering;
  out.insert(at, width - rendering.size(), '0');
  return out;
}

std::optional<Decimal> interior_value(const FieldSpec& f) {
  const bool integral = f.data_type == DataType::integer;
  const auto& lo = f.min_value;
  const auto& hi = f.max_value;
  if (lo && hi) {
    Decimal mid = (*lo + *hi).half();
    if (integral)
      mid = mid.floor();
    if (mid == *lo || mid == *hi)
      return std::nullopt;
    return mid;
  }
  Decimal v = Decimal::from_int(0);
  if (lo && v <= *lo)
    v = *lo + Decimal::from_int(1);
  if (hi && v >= *hi)
    v = *hi - Decimal::from_int(1);
  return v;
}

std::string at_width_input(const FieldSpec& f, std::size_t w, const std::set<std::string>& boundary) {
  if (f.is_number()) {
    std::vector<std::string> candidates{std::string(w, '9')};
    auto add = [&](const std::optional<Decimal>& d) {
      if (!d)
        return;
      if (auto p = pad_to(d->to_string(), w))
        candidates.push_back(*p);
    };
    add(f.max_value);
    add(f.min_value);
    add(interior_value(f));
    if (f.max_value)
      add(*f.max_value - Decimal::from_int(1));
    if (f.min_value)
      add(*f.min_value + Decimal::from_int(1));
    add(Decimal::from_int(0));
    for (const auto& c : candidates)
      if (!boundary.count(c) && field_accepts(f, c).accepted)
        return c;
    return std::string(w, '9');
  }
  if (f.data_type == DataType::select_list && f.options)
    for (const auto& o : *f.options)
      if (utf8_length(o) == w)
        return o;
  if (f.data_type == DataType::checkbox && w == 2)
    return "on";
  return std::string(w, 'a');
}

std::string over_width_input(const FieldSpec& f, std::size_t w) {
  if (!f.is_number())
    return std::string(w + 1, 'a');
  static constexpr std::string_view digits = "1234567890";
  std::string out;
  for (std::size_t i = 0; i <= w; ++i)
    out += digits[i % digits.size()];
  return out;
}

} // namespace

std::vector<FieldCase> generate_field_cases(const FieldSpec& field) {
  FormSpec probe{"probe", "/probe", "probe_submit", {field}};
  if (has_errors(validate_app_spec(AppSpec{"probe", {probe}})))
    throw Error(ErrorCode::invalid_metadata, "invalid field \"" + field.entity_name + "\"");

  std::vector<FieldCase> cases;
  auto add = [&](CaseCategory category, std::optional<std::string> input) {
    auto expected = field_accepts(field, input);
    cases.push_back({field.entity_name, std::move(input), std::move(expected), category});
  };

  if (field.required)
    add(CaseCategory::empty_required, std::nullopt);
  else
    add(CaseCategory::empty_optional, std::nullopt);

  std::set<std::string> boundary;
  if (field.is_number()) {
    const auto& lo = field.min_value;
    const auto& hi = field.max_value;
    if (lo)
      add(CaseCategory::at_min, lo->to_string());
    if (hi && !(lo && *lo == *hi))
      add(CaseCategory::at_max, hi->to_string());
    if (lo)
      add(CaseCategory::below_min, (*lo - Decimal::from_int(1)).to_string());
    if (hi)
      add(CaseCategory::above_max, (*hi + Decimal::from_int(1)).to_string());
    for (const auto& c : cases)
      if (c.input)
        boundary.insert(*c.input);
    if (auto mid = interior_value(field))
      add(CaseCategory::interior, mid->to_string());
    add(CaseCategory::non_numeric, kNonNumeric);
  }

  if (field.max_width) {
    auto w = static_cast<std::size_t>(*field.max_width);
    add(CaseCategory::at_width, at_width_input(field, w, boundary));
    add(CaseCategory::over_width, over_width_input(field, w));
  }

  if (field.data_type == DataType::select_list) {
    add(CaseCategory::option_valid, field.options->front());
    add(CaseCategory::option_invalid, kNotAnOption);
  }
  if (field.data_type == DataType::checkbox) {
    add(CaseCategory::checkbox_on, "on");
    add(CaseCategory::checkbox_off, std::nullopt);
  }
  return cases;
}

std::optional<std::string> default_fill(const FieldSpec& field) {
  std::optional<std::string> value;
  switch (field.data_type) {
  case DataType::integer:
  case DataType::numeric: {
    Decimal v = Decimal::from_int(1);
    const bool integral = field.data_type == DataType::integer;
    if (field.max_value) {
      Decimal hi = integral ? field.max_value->floor() : *field.max_value;
      v = std::min(v, hi);
    }
    if (field.min_value) {
      Decimal lo = integral ? field.min_value->ceil() : *field.min_value;
      v = std::max(v, lo);
    }
    value = v.to_string();
    break;
  }
  case DataType::text:
    value = "a";
    break;
  case DataType::select_list:
    if (field.options && !field.options->empty())
      value = field.options->front();
    break;
  case DataType::checkbox:
    if (field.required)
      value = "on";
    break;
  }
  if (field_accepts(field, value).accepted)
    return value;
  if (!field.required)
    return std::nullopt;
  throw Error(ErrorCode::unsatisfiable,
              "field \"" + field.entity_name + "\" has no value that satisfies its constraints");
}

dsl::TestSuite generate_form_suite(const FormSpec& form, const AppSpec& app, const FillStrategy& fill) {
  if (has_errors(validate_app_spec(app)))
    throw Error(ErrorCode::invalid_metadata, "metadata has errors; run validate");
  const FormSpec* in_app = app.find_form(form.form_id);
  if (!in_app || !(*in_app == form))
    throw Error(ErrorCode::invalid_argument, "form \"" + form.form_id + "\" is not part of the app");

  std::vector<std::optional<std::string>> fills;
  for (const auto& f : form.fields) {
    auto v = fill(f);
    if (!field_accepts(f, v).accepted)
      throw Error(ErrorCode::unsatisfiable, "fill strategy has no valid value for field \"" + f.entity_name + "\"");
    fills.push_back(std::move(v));
  }

  using namespace dsl;
  TestSuite suite;
  suite.suite_id = form.form_id;
  auto push = [&](Action a) { suite.directives.push_back(Directive{std::move(a), 0}); };
  const std::string label = "start";
  const Locator submit = Locator::by_name(form.submit_name);

  push(CheckpointDB{label});
  std::int64_t accepted = 0;
  if (form.fields.empty()) {
    push(Open{form.url_path});
    push(Click{submit});
    push(Expect{ExpectAccepted{}});
    push(Expect{DbDiffAdds{label, 1}});
    return suite;
  }
  for (std::size_t i = 0; i < form.fields.size(); ++i) {
    for (const auto& c : generate_field_cases(form.fields[i])) {
      push(Open{form.url_path});
      for (std::size_t j = 0; j < form.fields.size(); ++j) {
        const Locator loc = Locator::by_name(form.fields[j].entity_name);
        push(Clear{loc});
        const auto& value = i == j ? c.input : fills[j];
        if (value)
          push(Type{loc, *value});
      }
      push(Click{submit});
      if (c.expected.accepted) {
        ++accepted;
        push(Expect{ExpectAccepted{}});
      } else {
        push(Expect{ExpectRejected{c.field, c.expected.failures.front().code}});
      }
      push(DisplayScreen{});
    }
  }
  push(Expect{DbDiffAdds{label, accepted}});
  return suite;
}

} // namespace metatest::gen
