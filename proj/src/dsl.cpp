#include "metatest/dsl.hpp"

#include "metatest/error.hpp"
#include "metatest/kernel.hpp"

#include <cctype>
#include <charconv>
#include <set>

namespace metatest::dsl {

namespace {

template <class... Ts> struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front()))
    s.remove_prefix(1);
  while (!s.empty() && is_space(s.back()))
    s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail(int line, const std::string& message) { throw Error(ErrorCode::dsl, message, line); }

// Reads a quoted string starting at text[pos] == '"'. Advances pos past the
// closing quote.
std::string read_quoted(std::string_view text, std::size_t& pos, int line) {
  std::string out;
  ++pos;
  while (pos < text.size()) {
    char c = text[pos++];
    if (c == '"')
      return out;
    if (c != '\\') {
      out += c;
      continue;
    }
    if (pos >= text.size())
      break;
    char e = text[pos++];
    switch (e) {
    case '"': out += '"'; break;
    case '\\': out += '\\'; break;
    case 'n': out += '\n'; break;
    case 'r': out += '\r'; break;
    case 't': out += '\t'; break;
    default: fail(line, std::string("unknown escape \\") + e);
    }
  }
  fail(line, "unbalanced quotes");
}

// Drops a trailing `//` comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view text, int line) {
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        quoted = false;
    } else if (c == '"') {
      quoted = true;
    } else if (c == '/' && i + 1 < text.size() && text[i + 1] == '/') {
      return text.substr(0, i);
    }
  }
  if (quoted)
    fail(line, "unbalanced quotes");
  return text;
}

std::string parse_item(std::string_view item, int line) {
  item = trim(item);
  if (!item.empty() && item.front() == '"') {
    std::size_t pos = 0;
    std::string value = read_quoted(item, pos, line);
    if (!trim(item.substr(pos)).empty())
      fail(line, "unexpected text after quoted argument");
    return value;
  }
  if (item.find('"') != std::string_view::npos)
    fail(line, "unbalanced quotes");
  return std::string(item);
}

std::vector<std::string> parse_grouped(std::string_view rest, char close, int line) {
  // rest starts with the opening bracket.
  std::vector<std::string> items;
  std::size_t start = 1;
  bool quoted = false;
  for (std::size_t i = 1; i < rest.size(); ++i) {
    char c = rest[i];
    if (quoted) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        quoted = false;
      continue;
    }
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      items.push_back(parse_item(rest.substr(start, i - start), line));
      start = i + 1;
    } else if (c == close) {
      if (!trim(rest.substr(i + 1)).empty())
        fail(line, "unexpected text after closing bracket");
      auto last = rest.substr(start, i - start);
      if (!items.empty() || !trim(last).empty())
        items.push_back(parse_item(last, line));
      return items;
    }
  }
  if (quoted)
    fail(line, "unbalanced quotes");
  fail(line, std::string("missing closing '") + close + "'");
}

std::vector<std::string> parse_args(std::string_view rest, int line) {
  if (rest.empty())
    return {};
  if (rest.front() == '(')
    return parse_grouped(rest, ')', line);
  if (rest.front() == '{')
    return parse_grouped(rest, '}', line);
  std::vector<std::string> args;
  std::size_t pos = 0;
  while (pos < rest.size()) {
    while (pos < rest.size() && is_space(rest[pos]))
      ++pos;
    if (pos >= rest.size())
      break;
    if (rest[pos] == '"') {
      args.push_back(read_quoted(rest, pos, line));
    } else {
      std::size_t start = pos;
      while (pos < rest.size() && !is_space(rest[pos]) && rest[pos] != ',') {
        if (rest[pos] == '"')
          fail(line, "unbalanced quotes");
        ++pos;
      }
      args.push_back(std::string(rest.substr(start, pos - start)));
    }
    while (pos < rest.size() && is_space(rest[pos]))
      ++pos;
    if (pos < rest.size() && rest[pos] == ',')
      ++pos;
  }
  return args;
}

Locator locator_arg(const std::string& text, int line) {
  // Inside an expect line a braced locator arrives as one bare token.
  std::string_view t = text;
  if (t.size() >= 2 && ((t.front() == '{' && t.back() == '}') || (t.front() == '(' && t.back() == ')')))
    t = t.substr(1, t.size() - 2);
  try {
    return Locator::parse(t);
  } catch (const Error& e) {
    fail(line, e.what());
  }
}

void expect_arity(const std::string& keyword, const std::vector<std::string>& args, std::size_t n, int line) {
  if (args.size() != n)
    fail(line, keyword + " takes " + std::to_string(n) + " argument(s), got " + std::to_string(args.size()));
}

std::string non_empty(const std::string& keyword, const std::string& value, int line) {
  if (value.empty())
    fail(line, keyword + " argument must not be empty");
  return value;
}

Assertion parse_assertion(const std::vector<std::string>& args, int line) {
  if (args.empty())
    fail(line, "expect needs an assertion");
  const std::string& kind = args[0];
  if (kind == "accepted") {
    expect_arity("expect accepted", args, 1, line);
    return ExpectAccepted{};
  }
  if (kind == "rejected") {
    if (args.size() != 2 && args.size() != 3)
      fail(line, "expect rejected takes a locator and an optional failure code");
    ExpectRejected r{locator_arg(args[1], line).name(), std::nullopt};
    if (args.size() == 3) {
      r.code = parse_failure_code(args[2]);
      if (!r.code)
        fail(line, "unknown failure code \"" + args[2] + "\"");
    }
    return r;
  }
  if (kind == "screenContains") {
    expect_arity("expect screenContains", args, 2, line);
    return ScreenContains{args[1]};
  }
  if (kind == "dbAdds") {
    expect_arity("expect dbAdds", args, 3, line);
    std::int64_t n = -1;
    const std::string& t = args[2];
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), n);
    if (ec != std::errc{} || ptr != t.data() + t.size() || n < 0)
      fail(line, "dbAdds count must be a non-negative integer");
    return DbDiffAdds{non_empty("dbAdds", args[1], line), n};
  }
  fail(line, "unknown assertion \"" + kind + "\"");
}

} // namespace

void check_labels(const TestSuite& suite) {
  std::set<std::string> declared;
  for (const auto& d : suite.directives) {
    std::optional<std::string> used;
    if (auto* cp = std::get_if<CheckpointDB>(&d.action))
      declared.insert(cp->label);
    else if (auto* cmp = std::get_if<CompareDB>(&d.action))
      used = cmp->label;
    else if (auto* ex = std::get_if<Expect>(&d.action))
      if (auto* adds = std::get_if<DbDiffAdds>(&ex->assertion))
        used = adds->label;
    if (used && !declared.count(*used))
      fail(d.line, "undeclared checkpoint label \"" + *used + "\"");
  }
}

TestSuite parse_suite(std::string_view source, std::string suite_id) {
  TestSuite suite;
  suite.suite_id = std::move(suite_id);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= source.size()) {
    auto end = source.find('\n', pos);
    if (end == std::string_view::npos)
      end = source.size();
    std::string_view line = source.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    line = trim(strip_comment(line, line_no));
    if (line.empty())
      continue;
    std::size_t k = 0;
    while (k < line.size() && std::isalpha(static_cast<unsigned char>(line[k])))
      ++k;
    std::string keyword(line.substr(0, k));
    std::string_view rest = trim(line.substr(k));
    if (keyword.empty() || (k < line.size() && !is_space(line[k]) && line[k] != '(' && line[k] != '{' &&
                            line[k] != '"'))
      fail(line_no, "unknown directive \"" + std::string(line.substr(0, line.find_first_of(" \t(\"{"))) + "\"");
    auto args = parse_args(rest, line_no);

    Directive d;
    d.line = line_no;
    if (keyword == "open") {
      expect_arity(keyword, args, 1, line_no);
      d.action = Open{non_empty(keyword, args[0], line_no)};
    } else if (keyword == "clear") {
      expect_arity(keyword, args, 1, line_no);
      d.action = Clear{locator_arg(args[0], line_no)};
    } else if (keyword == "type") {
      expect_arity(keyword, args, 2, line_no);
      d.action = Type{locator_arg(args[0], line_no), args[1]};
    } else if (keyword == "click") {
      expect_arity(keyword, args, 1, line_no);
      d.action = Click{locator_arg(args[0], line_no)};
    } else if (keyword == "displayScreen") {
      expect_arity(keyword, args, 0, line_no);
      d.action = DisplayScreen{};
    } else if (keyword == "checkpointDB") {
      expect_arity(keyword, args, 1, line_no);
      d.action = CheckpointDB{non_empty(keyword, args[0], line_no)};
    } else if (keyword == "compareDB") {
      expect_arity(keyword, args, 1, line_no);
      d.action = CompareDB{non_empty(keyword, args[0], line_no)};
    } else if (keyword == "expect") {
      d.action = Expect{parse_assertion(args, line_no)};
    } else if (keyword == "userid") {
      expect_arity(keyword, args, 1, line_no);
      suite.userid = non_empty(keyword, args[0], line_no);
      continue;
    } else {
      fail(line_no, "unknown directive \"" + keyword + "\"");
    }
    suite.directives.push_back(std::move(d));
  }
  check_labels(suite);
  return suite;
}

std::string to_text(const Directive& directive) {
  return std::visit(
      overloaded{
          [](const Open& d) { return "open " + quote(d.url); },
          [](const Clear& d) { return "clear " + quote(d.locator.text()); },
          [](const Type& d) { return "type " + quote(d.locator.text()) + "," + quote(d.text); },
          [](const Click& d) { return "click " + quote(d.locator.text()); },
          [](const DisplayScreen&) { return std::string("displayScreen"); },
          [](const CheckpointDB& d) { return "checkpointDB " + quote(d.label); },
          [](const CompareDB& d) { return "compareDB " + quote(d.label); },
          [](const Expect& d) {
            return std::visit(
                overloaded{
                    [](const ExpectAccepted&) { return std::string("expect accepted"); },
                    [](const ExpectRejected& a) {
                      std::string s = "expect rejected " + quote("name=" + a.field);
                      if (a.code)
                        s += " " + std::string(to_string(*a.code));
                      return s;
                    },
                    [](const ScreenContains& a) { return "expect screenContains " + quote(a.text); },
                    [](const DbDiffAdds& a) {
                      return "expect dbAdds " + quote(a.label) + " " + std::to_string(a.count);
                    },
                },
                d.assertion);
          },
      },
      directive.action);
}

std::string serialize_suite(const TestSuite& suite) {
  std::string out;
  if (suite.userid != "tester")
    out += "userid " + quote(suite.userid) + "\n";
  for (const auto& d : suite.directives)
    out += to_text(d) + "\n";
  return out;
}

bool is_action(const Directive& directive) {
  return std::holds_alternative<Open>(directive.action) || std::holds_alternative<Clear>(directive.action) ||
         std::holds_alternative<Type>(directive.action) || std::holds_alternative<Click>(directive.action) ||
         std::holds_alternative<DisplayScreen>(directive.action);
}

} // namespace metatest::dsl
