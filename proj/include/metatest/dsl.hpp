#pragma once

#include "metatest/metamodel.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace metatest::dsl {

struct Open {
  std::string url;
  bool operator==(const Open&) const = default;
};
struct Clear {
  Locator locator;
  bool operator==(const Clear&) const = default;
};
struct Type {
  Locator locator;
  std::string text;
  bool operator==(const Type&) const = default;
};
struct Click {
  Locator locator;
  bool operator==(const Click&) const = default;
};
struct DisplayScreen {
  bool operator==(const DisplayScreen&) const = default;
};
struct CheckpointDB {
  std::string label;
  bool operator==(const CheckpointDB&) const = default;
};
struct CompareDB {
  std::string label;
  bool operator==(const CompareDB&) const = default;
};

struct ExpectAccepted {
  bool operator==(const ExpectAccepted&) const = default;
};
struct ExpectRejected {
  std::string field;
  std::optional<FailureCode> code;
  bool operator==(const ExpectRejected&) const = default;
};
struct ScreenContains {
  std::string text;
  bool operator==(const ScreenContains&) const = default;
};
struct DbDiffAdds {
  std::string label;
  std::int64_t count = 0;
  bool operator==(const DbDiffAdds&) const = default;
};

using Assertion = std::variant<ExpectAccepted, ExpectRejected, ScreenContains, DbDiffAdds>;

struct Expect {
  Assertion assertion;
  bool operator==(const Expect&) const = default;
};

using Action = std::variant<Open, Clear, Type, Click, DisplayScreen, CheckpointDB, CompareDB, Expect>;

struct Directive {
  Action action;
  int line = 0; // 1-based source line; 0 when constructed in code

  /// Source position is not part of a directive's identity.
  bool operator==(const Directive& other) const { return action == other.action; }
};

struct TestSuite {
  std::string suite_id;
  std::string userid = "tester";
  std::vector<Directive> directives;
  bool operator==(const TestSuite&) const = default;
};

/// Line-oriented parse. Accepts the quoted (`type "name=x","0"`),
/// parenthesized (`type (name=x, 0)`) and braced (`clear {name=x}`) styles.
/// Throws Error(ErrorCode::dsl) carrying the 1-based line number.
TestSuite parse_suite(std::string_view source, std::string suite_id);

/// Canonical quoted style, one directive per line.
std::string serialize_suite(const TestSuite& suite);
std::string to_text(const Directive& directive);

/// True for open/clear/type/click/displayScreen.
bool is_action(const Directive& directive);

/// Checks the checkpoint-label invariant; throws Error(ErrorCode::dsl).
void check_labels(const TestSuite& suite);

} // namespace metatest::dsl
