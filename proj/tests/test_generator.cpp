#include "metatest/error.hpp"
#include "metatest/generator.hpp"
#include "metatest/runner.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace metatest;
using namespace metatest::gen;
using namespace metatest::testing;

namespace {

using Expectation = std::pair<std::optional<std::string>, std::optional<FailureCode>>; // input, first failure

std::vector<Expectation> summarize(const std::vector<FieldCase>& cases) {
  std::vector<Expectation> out;
  for (const auto& c : cases)
    out.emplace_back(c.input, c.expected.accepted ? std::nullopt
                                                   : std::optional<FailureCode>(c.expected.failures.front().code));
  return out;
}

bool contains(const std::vector<Expectation>& all, const Expectation& e) {
  return std::find(all.begin(), all.end(), e) != all.end();
}

} // namespace

TEST(FieldCases, RangeExample) {
  auto cases = summarize(generate_field_cases(integer_field("v", true, 0, 250)));
  const std::optional<FailureCode> ok;
  EXPECT_TRUE(contains(cases, {"0", ok}));
  EXPECT_TRUE(contains(cases, {"250", ok}));
  EXPECT_TRUE(contains(cases, {"-1", FailureCode::below_min}));
  EXPECT_TRUE(contains(cases, {"251", FailureCode::above_max}));
  EXPECT_TRUE(contains(cases, {"abc", FailureCode::not_integer}));
  EXPECT_TRUE(contains(cases, {std::nullopt, FailureCode::missing_required}));
  EXPECT_TRUE(contains(cases, {"125", ok}));
  EXPECT_EQ(cases.size(), 7u);
}

TEST(FieldCases, WorkedExampleField) {
  auto cases = generate_field_cases(variable1_app().forms[0].fields[0]);
  std::vector<Expectation> expected{{std::nullopt, FailureCode::missing_required},
                                    {"0", std::nullopt},
                                    {"abc", FailureCode::not_integer},
                                    {"999", std::nullopt},
                                    {"1234", FailureCode::too_wide}};
  EXPECT_EQ(summarize(cases), expected);
  EXPECT_EQ(cases[0].category, CaseCategory::empty_required);
  EXPECT_EQ(cases[3].category, CaseCategory::at_width);
}

TEST(FieldCases, UnconstrainedOptionalText) {
  FieldSpec t;
  t.entity_name = "t";
  auto cases = generate_field_cases(t);
  ASSERT_EQ(cases.size(), 1u);
  EXPECT_EQ(cases[0].category, CaseCategory::empty_optional);
  EXPECT_TRUE(cases[0].expected.accepted);
}

TEST(FieldCases, OptionsAndCheckbox) {
  FieldSpec s;
  s.entity_name = "s";
  s.data_type = DataType::select_list;
  s.options = std::vector<std::string>{"red", "blue"};
  auto cases = generate_field_cases(s);
  ASSERT_EQ(cases.size(), 3u);
  EXPECT_EQ(cases[1].input, "red");
  EXPECT_EQ(cases[2].input, "__NOT_AN_OPTION__");
  EXPECT_EQ(cases[2].expected.failures.at(0).code, FailureCode::not_an_option);

  FieldSpec c;
  c.entity_name = "c";
  c.data_type = DataType::checkbox;
  c.required = true;
  auto cc = generate_field_cases(c);
  ASSERT_EQ(cc.size(), 3u);
  EXPECT_EQ(cc[1].category, CaseCategory::checkbox_on);
  EXPECT_TRUE(cc[1].expected.accepted);
  EXPECT_EQ(cc[2].category, CaseCategory::checkbox_off);
  EXPECT_FALSE(cc[2].expected.accepted);
}

TEST(FieldCases, RejectsInvalidField) {
  EXPECT_THROW(generate_field_cases(integer_field("v", true, 5, 1)), Error);
}

TEST(FieldCases, RandomizedInvariants) {
  std::mt19937 rng(13);
  for (int i = 0; i < 500; ++i) {
    FieldSpec f = random_field(rng);
    auto cases = generate_field_cases(f);
    ASSERT_EQ(cases, generate_field_cases(f)); // deterministic
    for (std::size_t k = 0; k < cases.size(); ++k) {
      ASSERT_EQ(cases[k].expected, field_accepts(f, cases[k].input));
      if (k) {
        ASSERT_LT(cases[k - 1].category, cases[k].category);
      }
    }
    // Each bound and its neighbour appears in exactly one case.
    std::vector<std::string> bounds;
    if (f.min_value) {
      bounds.push_back(f.min_value->to_string());
      bounds.push_back((*f.min_value - Decimal::from_int(1)).to_string());
    }
    if (f.max_value) {
      bounds.push_back(f.max_value->to_string());
      bounds.push_back((*f.max_value + Decimal::from_int(1)).to_string());
    }
    std::sort(bounds.begin(), bounds.end());
    bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
    for (const auto& b : bounds)
      ASSERT_EQ(std::count_if(cases.begin(), cases.end(), [&](const FieldCase& c) { return c.input == b; }), 1)
          << b;
    if (f.max_width) {
      auto at = std::find_if(cases.begin(), cases.end(),
                             [](const FieldCase& c) { return c.category == CaseCategory::at_width; });
      auto over = std::find_if(cases.begin(), cases.end(),
                               [](const FieldCase& c) { return c.category == CaseCategory::over_width; });
      ASSERT_NE(at, cases.end());
      ASSERT_NE(over, cases.end());
      ASSERT_EQ(utf8_length(*at->input), static_cast<std::size_t>(*f.max_width));
      ASSERT_EQ(utf8_length(*over->input), static_cast<std::size_t>(*f.max_width + 1));
    }
  }
}

TEST(DefaultFill, Examples) {
  EXPECT_EQ(default_fill(integer_field("v", true, 0, 250)), "1");
  EXPECT_EQ(default_fill(integer_field("v", true, 10, 20)), "10");
  EXPECT_EQ(default_fill(integer_field("v", true, -20, -10)), "-10");
  FieldSpec s;
  s.entity_name = "s";
  s.data_type = DataType::select_list;
  s.options = std::vector<std::string>{"red", "blue"};
  EXPECT_EQ(default_fill(s), "red");
  FieldSpec c;
  c.entity_name = "c";
  c.data_type = DataType::checkbox;
  EXPECT_EQ(default_fill(c), std::nullopt);
  c.required = true;
  EXPECT_EQ(default_fill(c), "on");
}

TEST(DefaultFill, UnsatisfiableMatchesBruteForce) {
  FieldSpec f = integer_field("v", true, 1000, 2000, 3);
  // No string of at most three characters lies in [1000, 2000].
  bool any = false;
  for (int v = -99; v <= 999 && !any; ++v)
    any = field_accepts(f, std::to_string(v)).accepted;
  EXPECT_FALSE(any);
  try {
    default_fill(f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsatisfiable);
  }
  f.required = false;
  EXPECT_EQ(default_fill(f), std::nullopt);
}

TEST(DefaultFill, AlwaysValidWhenSatisfiable) {
  std::mt19937 rng(17);
  for (int i = 0; i < 1000; ++i) {
    FieldSpec f = random_field(rng);
    try {
      auto v = default_fill(f);
      ASSERT_TRUE(field_accepts(f, v).accepted);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::unsatisfiable);
      ASSERT_TRUE(f.required);
    }
  }
}

TEST(FormSuite, WorkedExampleBlocks) {
  AppSpec app = variable1_app();
  auto suite = generate_form_suite(app.forms[0], app);
  auto text = dsl::serialize_suite(suite);
  const std::string first_two = "checkpointDB \"start\"\n"
                                "open \"/f1\"\n"
                                "clear \"name=variable1\"\n"
                                "click \"name=actionSubmit\"\n"
                                "expect rejected \"name=variable1\" missing_required\n"
                                "displayScreen\n"
                                "open \"/f1\"\n"
                                "clear \"name=variable1\"\n"
                                "type \"name=variable1\",\"0\"\n"
                                "click \"name=actionSubmit\"\n"
                                "expect accepted\n"
                                "displayScreen\n";
  EXPECT_EQ(text.substr(0, first_two.size()), first_two);
  EXPECT_EQ(text.substr(text.rfind("expect dbAdds")), "expect dbAdds \"start\" 2\n");
  EXPECT_EQ(dsl::serialize_suite(generate_form_suite(app.forms[0], app)), text);
}

TEST(FormSuite, ZeroFieldForm) {
  AppSpec app = single_form_app({});
  auto text = dsl::serialize_suite(generate_form_suite(app.forms[0], app));
  EXPECT_EQ(text, "checkpointDB \"start\"\nopen \"/f1\"\nclick \"name=actionSubmit\"\nexpect accepted\n"
                  "expect dbAdds \"start\" 1\n");
}

TEST(FormSuite, FillFailureNamesField) {
  AppSpec app = single_form_app({integer_field("a", true, 0, 5), integer_field("b", true, 1000, 2000, 3)});
  try {
    generate_form_suite(app.forms[0], app);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsatisfiable);
    EXPECT_NE(std::string(e.what()).find("\"b\""), std::string::npos);
  }
}

TEST(FormSuite, MultiFieldSuitesPassAndCountAdds) {
  std::mt19937 rng(19);
  int generated = 0;
  for (int i = 0; i < 150; ++i) {
    std::vector<FieldSpec> fields;
    int n = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int k = 0; k < n; ++k)
      fields.push_back(random_field(rng, "f" + std::to_string(k)));
    AppSpec app = single_form_app(fields);
    dsl::TestSuite suite;
    try {
      suite = generate_form_suite(app.forms[0], app);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::unsatisfiable);
      continue;
    }
    ++generated;
    // Mask-freedom: every co-filled value validates on its own.
    for (const auto& f : fields)
      ASSERT_TRUE(field_accepts(f, default_fill(f)).accepted);
    Site site(app, counter());
    runner::InProcessDriver driver(site, suite.userid);
    auto run = runner::execute_suite(suite, driver, nullptr);
    ASSERT_EQ(run.verdict, runner::Verdict::pass) << dsl::serialize_suite(suite);
    std::int64_t accepted_expectations = 0;
    for (const auto& d : suite.directives)
      if (auto* e = std::get_if<dsl::Expect>(&d.action))
        accepted_expectations += std::holds_alternative<dsl::ExpectAccepted>(e->assertion);
    ASSERT_EQ(site.store().tables.at("f1").size(), static_cast<std::size_t>(accepted_expectations));
  }
  EXPECT_GT(generated, 100);
}
