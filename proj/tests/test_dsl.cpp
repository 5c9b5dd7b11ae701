#include "metatest/dsl.hpp"
#include "metatest/error.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace metatest;
using namespace metatest::dsl;
using namespace metatest::testing;

namespace {

int error_line(std::string_view source) {
  try {
    parse_suite(source, "s");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dsl);
    return e.line();
  }
  return -1;
}

Locator loc(const std::string& n) { return Locator::by_name(n); }

} // namespace

TEST(ParseSuite, WorkedSequence) {
  auto suite = parse_suite(read_text_file(data_path("worked_sequence.suite")), "worked");
  std::vector<Directive> expected{
      {Open{"/f1"}, 0},          {Clear{loc("variable1")}, 0},       {Click{loc("actionSubmit")}, 0},
      {DisplayScreen{}, 0},      {Open{"/f1"}, 0},                   {Clear{loc("variable1")}, 0},
      {Type{loc("variable1"), "0"}, 0}, {Click{loc("actionSubmit")}, 0}, {DisplayScreen{}, 0},
  };
  EXPECT_EQ(suite.directives, expected);
  EXPECT_EQ(suite.directives[0].line, 2);
  EXPECT_EQ(suite.userid, "tester");
}

TEST(ParseSuite, MixedSpellingsNormalize) {
  auto braced = parse_suite("open (/f1)\nclear {name=variable1}\ntype (name=variable1, 0)\nclick (name=actionSubmit)\n", "a");
  auto quoted = parse_suite("open \"/f1\"\nclear \"name=variable1\"\ntype \"name=variable1\",\"0\"\nclick \"name=actionSubmit\"\n", "a");
  auto bare = parse_suite("open /f1\nclear name=variable1\ntype name=variable1, 0\nclick name=actionSubmit\n", "a");
  EXPECT_EQ(braced, quoted);
  EXPECT_EQ(bare, quoted);
  EXPECT_EQ(serialize_suite(braced), serialize_suite(quoted));
}

TEST(ParseSuite, CommentsAndBlankLines) {
  auto a = parse_suite("// header\n\nopen \"/f1\" // trailing\n   \ndisplayScreen //\n", "s");
  auto b = parse_suite("open \"/f1\"\ndisplayScreen\n", "s");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.directives[1].line, 5);
  auto q = parse_suite("type \"name=a\",\"x // not a comment\"\n", "s");
  EXPECT_EQ(std::get<Type>(q.directives[0].action).text, "x // not a comment");
}

TEST(ParseSuite, Errors) {
  EXPECT_EQ(error_line("open \"/f1\"\nfrobnicate \"x\"\n"), 2);
  EXPECT_EQ(error_line("Open \"/f1\"\n"), 1); // keywords are case-sensitive
  EXPECT_EQ(error_line("\n\nclear \"id=x\"\n"), 3);
  EXPECT_EQ(error_line("type \"name=a\",\"0\n"), 1);
  EXPECT_EQ(error_line("open (/f1\n"), 1);
  EXPECT_EQ(error_line("open \"\"\n"), 1);
  EXPECT_EQ(error_line("checkpointDB \"a\"\nexpect dbAdds \"b\" 1\n"), 2);
  EXPECT_EQ(error_line("compareDB \"a\"\ncheckpointDB \"a\"\n"), 1);
  EXPECT_EQ(error_line("expect dbAdds \"a\" -1\n"), 1);
  EXPECT_EQ(error_line("expect rejected \"name=a\" nonsense\n"), 1);
  EXPECT_EQ(error_line("expect maybe\n"), 1);
  EXPECT_EQ(error_line("displayScreen now\n"), 1);
  EXPECT_EQ(error_line("type \"name=a\"\n"), 1);
}

TEST(ParseSuite, Expectations) {
  auto s = parse_suite(
      "checkpointDB \"start\"\nexpect accepted\nexpect rejected \"name=v\" too_wide\nexpect rejected {name=v}\n"
      "expect screenContains \"STATUS accepted\"\nexpect dbAdds \"start\" 3\ncompareDB \"start\"\n",
      "s");
  ASSERT_EQ(s.directives.size(), 7u);
  EXPECT_EQ(s.directives[2], (Directive{Expect{ExpectRejected{"v", FailureCode::too_wide}}, 0}));
  EXPECT_EQ(s.directives[3], (Directive{Expect{ExpectRejected{"v", std::nullopt}}, 0}));
  EXPECT_EQ(s.directives[5], (Directive{Expect{DbDiffAdds{"start", 3}}, 0}));
}

TEST(ParseSuite, UseridHeader) {
  TestSuite s;
  s.suite_id = "u";
  s.userid = "alice";
  s.directives.push_back({Open{"/f1"}, 0});
  EXPECT_EQ(serialize_suite(s), "userid \"alice\"\nopen \"/f1\"\n");
  EXPECT_EQ(parse_suite(serialize_suite(s), "u"), s);
}

TEST(SerializeSuite, RoundTripRandomized) {
  std::mt19937 rng(1);
  for (int i = 0; i < 1000; ++i) {
    TestSuite s = random_suite(rng);
    std::string text = serialize_suite(s);
    TestSuite back = parse_suite(text, "r");
    ASSERT_EQ(back, s) << text;
    ASSERT_EQ(serialize_suite(back), text);
  }
}

TEST(SerializeSuite, CommentInsertionIsInvisible) {
  std::mt19937 rng(2);
  for (int i = 0; i < 200; ++i) {
    TestSuite s = random_suite(rng);
    std::string text = serialize_suite(s);
    std::string noisy = "// generated\n";
    std::size_t start = 0;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      noisy += "\n  " + text.substr(start, end - start) + "   // note\n";
      start = end + 1;
    }
    ASSERT_EQ(parse_suite(noisy, "r"), s) << noisy;
  }
}

TEST(SerializeSuite, EscapesQuoted) {
  TestSuite s;
  s.directives.push_back({Type{loc("a"), "q\"b\\n\nr\rt\t"}, 0});
  EXPECT_EQ(serialize_suite(s), "type \"name=a\",\"q\\\"b\\\\n\\nr\\rt\\t\"\n");
}
