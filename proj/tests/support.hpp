#pragma once

#include "metatest/dsl.hpp"
#include "metatest/kernel.hpp"
#include "metatest/metamodel.hpp"

#include "fs_support.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace metatest::testing {

inline AppSpec load_app(const std::string& name) { return parse_app_spec(read_text_file(data_path(name))); }

inline FieldSpec integer_field(std::string name, bool required, std::optional<std::int64_t> lo,
                               std::optional<std::int64_t> hi, std::optional<std::int64_t> width = std::nullopt) {
  FieldSpec f;
  f.entity_name = std::move(name);
  f.data_type = DataType::integer;
  f.required = required;
  f.max_width = width;
  if (lo)
    f.min_value = Decimal::from_int(*lo);
  if (hi)
    f.max_value = Decimal::from_int(*hi);
  return f;
}

inline AppSpec single_form_app(std::vector<FieldSpec> fields, std::string submit = "actionSubmit") {
  FormSpec form;
  form.form_id = "f1";
  form.url_path = "/f1";
  form.submit_name = std::move(submit);
  form.fields = std::move(fields);
  AppSpec app;
  app.app_id = "demo";
  app.forms.push_back(std::move(form));
  return app;
}

/// The worked example: variable1, integer, required, up to three digits.
inline AppSpec variable1_app() { return single_form_app({integer_field("variable1", true, {}, {}, 3)}); }

inline std::shared_ptr<Clock> counter() { return std::make_shared<CounterClock>(); }

inline Decimal random_decimal(std::mt19937& rng, std::int64_t lo, std::int64_t hi, bool integral) {
  std::uniform_int_distribution<std::int64_t> whole(lo, hi);
  std::string text = std::to_string(whole(rng));
  if (!integral && std::uniform_int_distribution<int>(0, 1)(rng)) {
    int digits = std::uniform_int_distribution<int>(1, 2)(rng);
    text += '.';
    for (int i = 0; i < digits; ++i)
      text += static_cast<char>('0' + std::uniform_int_distribution<int>(0, 9)(rng));
  }
  return *Decimal::parse_numeric(text);
}

/// A FieldSpec that passes validation, covering every data type.
inline FieldSpec random_field(std::mt19937& rng, const std::string& name = "x") {
  auto chance = [&](int percent) { return std::uniform_int_distribution<int>(0, 99)(rng) < percent; };
  FieldSpec f;
  f.entity_name = name;
  f.data_type = static_cast<DataType>(std::uniform_int_distribution<int>(0, 4)(rng));
  f.required = chance(50);
  if (chance(50))
    f.max_width = std::uniform_int_distribution<std::int64_t>(1, 6)(rng);
  if (f.is_number()) {
    const bool integral = f.data_type == DataType::integer;
    if (chance(75))
      f.min_value = random_decimal(rng, -1000, 1000, integral);
    if (chance(75)) {
      Decimal span = random_decimal(rng, 0, 500, integral);
      f.max_value = f.min_value ? *f.min_value + span : random_decimal(rng, -1000, 1000, integral);
      if (f.min_value && *f.max_value < *f.min_value)
        f.max_value = f.min_value;
    }
  }
  if (f.data_type == DataType::select_list) {
    std::vector<std::string> options;
    int n = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int i = 0; i < n; ++i)
      options.push_back("opt" + std::to_string(i) + std::string(static_cast<std::size_t>(i), 'z'));
    f.options = options;
  }
  if (chance(20))
    f.label = "Label " + name;
  return f;
}

/// Any well-formed suite, not necessarily runnable: random names, urls and text.
inline std::string random_text(std::mt19937& rng) {
  static const std::string alphabet = "abcXYZ019 ,\"\\/(){}=\t\r\n-.\xc3\xa9";
  std::string s;
  int len = std::uniform_int_distribution<int>(0, 10)(rng);
  for (int i = 0; i < len; ++i)
    s += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
  return s;
}

inline std::string random_name(std::mt19937& rng) {
  static const std::vector<std::string> names{"variable1", "a", "field_2", "_x", "Submit"};
  return names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)];
}

inline std::string non_empty(std::mt19937& rng) {
  std::string s = random_text(rng);
  return s.empty() ? "L" : s;
}

inline dsl::TestSuite random_suite(std::mt19937& rng) {
  using namespace dsl;
  TestSuite s;
  s.suite_id = "r";
  if (std::uniform_int_distribution<int>(0, 3)(rng) == 0)
    s.userid = non_empty(rng);
  std::vector<std::string> labels;
  int n = std::uniform_int_distribution<int>(0, 25)(rng);
  for (int i = 0; i < n; ++i) {
    Action a;
    switch (std::uniform_int_distribution<int>(0, 11)(rng)) {
    case 0: a = Open{non_empty(rng)}; break;
    case 1: a = Clear{Locator::by_name(random_name(rng))}; break;
    case 2: a = Type{Locator::by_name(random_name(rng)), random_text(rng)}; break;
    case 3: a = Click{Locator::by_name(random_name(rng))}; break;
    case 4: a = DisplayScreen{}; break;
    case 5:
      labels.push_back(non_empty(rng));
      a = CheckpointDB{labels.back()};
      break;
    case 6:
      if (labels.empty())
        continue;
      a = CompareDB{labels[std::uniform_int_distribution<std::size_t>(0, labels.size() - 1)(rng)]};
      break;
    case 7: a = Expect{ExpectAccepted{}}; break;
    case 8: {
      ExpectRejected r{random_name(rng), std::nullopt};
      if (std::uniform_int_distribution<int>(0, 1)(rng))
        r.code = static_cast<FailureCode>(std::uniform_int_distribution<int>(0, 7)(rng));
      a = Expect{r};
      break;
    }
    case 9: a = Expect{ScreenContains{random_text(rng)}}; break;
    default:
      if (labels.empty())
        continue;
      a = Expect{DbDiffAdds{labels.back(), std::uniform_int_distribution<std::int64_t>(0, 1000)(rng)}};
    }
    s.directives.push_back({a, 0});
  }
  return s;
}

} // namespace metatest::testing
