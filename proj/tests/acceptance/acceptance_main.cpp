// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exits nonzero when any criterion fails.

#include "metatest/agents.hpp"
#include "metatest/error.hpp"
#include "metatest/generator.hpp"
#include "metatest/logkit.hpp"
#include "metatest/runner.hpp"
#include "metatest/wire.hpp"

#include "../support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>

using namespace metatest;
using namespace metatest::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Records the first few disagreements and counts the rest.
class Tally {
public:
  void fail(const std::string& what) {
    if (++failures_ <= 3)
      notes_ += (notes_.empty() ? "" : "; ") + what;
  }
  Outcome result(const std::string& summary) const {
    if (failures_ == 0)
      return {true, summary};
    return {false, summary + ", " + std::to_string(failures_) + " disagreement(s): " + notes_};
  }

private:
  int failures_ = 0;
  std::string notes_;
};

std::string join(const std::set<std::string>& items) {
  std::string out = "{";
  for (const auto& s : items)
    out += (out.size() > 1 ? "," : "") + s;
  return out + "}";
}

runner::RunRecord run_fresh(const AppSpec& app, const dsl::TestSuite& suite, runner::RunStore* store = nullptr,
                            Site** keep = nullptr) {
  static std::vector<std::unique_ptr<Site>> kept;
  auto site = std::make_unique<Site>(app, counter());
  runner::InProcessDriver driver(*site, suite.userid.empty() ? "acceptance" : suite.userid);
  auto run = runner::execute_suite(suite, driver, store);
  if (keep) {
    *keep = site.get();
    kept.push_back(std::move(site));
  }
  return run;
}

std::optional<dsl::TestSuite> generated_suite(const AppSpec& app) {
  try {
    return gen::generate_form_suite(app.forms[0], app);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::unsatisfiable)
      return std::nullopt;
    throw;
  }
}

AppSpec random_app(std::mt19937& rng) {
  std::vector<FieldSpec> fields;
  int n = std::uniform_int_distribution<int>(1, 3)(rng);
  for (int k = 0; k < n; ++k)
    fields.push_back(random_field(rng, "f" + std::to_string(k)));
  return single_form_app(fields);
}

// Actions aimed at the form, with values drawn from each field's generated
// cases so that submits both pass and fail.
dsl::TestSuite random_action_suite(std::mt19937& rng, const AppSpec& app, bool with_expects, bool screens_after) {
  using namespace dsl;
  const FormSpec& form = app.forms[0];
  std::vector<std::string> names{form.submit_name};
  std::vector<std::string> values{"", "0", "1", "-1", "12", "x"};
  for (const auto& f : form.fields) {
    names.push_back(f.entity_name);
    for (const auto& c : gen::generate_field_cases(f))
      if (c.input)
        values.push_back(*c.input);
  }
  auto pick = [&](const auto& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
  TestSuite s;
  s.suite_id = "random";
  s.directives.push_back({Open{form.url_path}, 0});
  if (screens_after)
    s.directives.push_back({DisplayScreen{}, 0});
  int n = std::uniform_int_distribution<int>(3, 30)(rng);
  for (int i = 0; i < n; ++i) {
    int roll = std::uniform_int_distribution<int>(0, with_expects ? 9 : 6)(rng);
    Action a;
    switch (roll) {
    case 0: a = Open{form.url_path}; break;
    case 1: a = Clear{Locator::by_name(pick(names))}; break;
    case 2:
    case 3: a = Type{Locator::by_name(pick(names)), pick(values)}; break;
    case 4:
    case 5: a = Click{Locator::by_name(form.submit_name)}; break;
    case 6: a = Click{Locator::by_name(pick(names))}; break;
    case 7: a = DisplayScreen{}; break;
    case 8: a = Expect{ExpectAccepted{}}; break;
    default: a = Expect{ExpectRejected{pick(names), std::nullopt}}; break;
    }
    s.directives.push_back({a, 0});
    if (screens_after && is_action(s.directives.back()))
      s.directives.push_back({DisplayScreen{}, 0});
  }
  return s;
}

std::vector<std::string> snapshots(const runner::RunRecord& run) {
  std::vector<std::string> out;
  for (const auto& s : run.steps)
    if (s.snapshot)
      out.push_back(*s.snapshot);
  return out;
}

std::vector<runner::StepStatus> statuses(const runner::RunRecord& run) {
  std::vector<runner::StepStatus> out;
  for (const auto& s : run.steps)
    out.push_back(s.status);
  return out;
}

// Maps each case's typed input to whether its submit was accepted.
std::map<std::string, bool> case_outcomes(const runner::RunRecord& run) {
  std::map<std::string, bool> out;
  std::string input;
  for (const auto& s : run.steps) {
    if (s.directive.rfind("open ", 0) == 0)
      input = "<empty>";
    if (s.directive.rfind("type ", 0) == 0) {
      auto suite = dsl::parse_suite(s.directive, "one");
      input = std::get<dsl::Type>(suite.directives[0].action).text;
    }
    if (s.directive.rfind("click ", 0) == 0)
      out[input] = s.detail.rfind("accepted", 0) == 0;
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome boundary_values() {
  AppSpec app = single_form_app({integer_field("variable1", true, 0, 250)});
  std::set<std::string> range;
  for (const auto& c : gen::generate_field_cases(app.forms[0].fields[0]))
    if (c.category == gen::CaseCategory::at_min || c.category == gen::CaseCategory::at_max ||
        c.category == gen::CaseCategory::below_min || c.category == gen::CaseCategory::above_max)
      range.insert(*c.input);
  const std::set<std::string> want_range{"0", "250", "-1", "251"};
  if (range != want_range)
    return {false, "range cases " + join(range) + ", want " + join(want_range)};

  TempDir dir;
  runner::RunStore store(dir.path());
  auto suite = gen::generate_form_suite(app.forms[0], app);
  auto original = run_fresh(app, suite, &store);
  if (original.verdict != runner::Verdict::pass)
    return {false, "generated suite verdict " + std::string(to_string(original.verdict))};

  AppSpec narrow = app;
  narrow.forms[0].fields[0].max_value = Decimal::from_int(249);
  Site site(narrow, counter());
  runner::InProcessDriver driver(site, "acceptance");
  auto replay = runner::replay_run(original.run_id, driver, store).first;
  auto before = case_outcomes(original);
  auto after = case_outcomes(replay);
  std::set<std::string> flipped;
  for (const auto& [input, accepted] : before)
    if (after.at(input) != accepted)
      flipped.insert(input);
  const std::set<std::string> want{"250", "251"};
  std::string detail = "range cases " + join(range) + ", pass under [0,250], flipped under [0,249] " + join(flipped) +
                       ", want " + join(want);
  return {flipped == want, detail};
}

Outcome worked_sequence() {
  AppSpec app = load_app("variable1.json");
  auto suite = dsl::parse_suite(read_text_file(data_path("worked_sequence.suite")), "worked");
  const std::vector<std::string> expected{
      "FORM f1\nFIELD variable1 TYPE integer VALUE - DIAG missing_required\nSTATUS rejected\n",
      "FORM f1\nFIELD variable1 TYPE integer VALUE - DIAG -\nSTATUS accepted\n"};
  for (int i = 0; i < 10; ++i) {
    auto run = run_fresh(app, suite);
    if (run.verdict != runner::Verdict::pass)
      return {false, "run " + std::to_string(i) + " verdict " + std::string(to_string(run.verdict))};
    if (snapshots(run) != expected)
      return {false, "run " + std::to_string(i) + " snapshots differ"};
  }
  return {true, "10 fresh runs pass with identical snapshots"};
}

Outcome generator_oracle() {
  std::mt19937 rng(3001);
  Tally tally;
  int specs = 0, cases = 0;
  for (; specs < 250; ++specs) {
    FieldSpec f = random_field(rng, "x");
    AppSpec app = single_form_app({f});
    for (const auto& c : gen::generate_field_cases(f)) {
      ++cases;
      auto oracle = field_accepts(f, c.input);
      if (!(c.expected == oracle))
        tally.fail("generator vs field_accepts on " + c.input.value_or("<empty>"));
      Site site(app, counter());
      runner::InProcessDriver driver(site, "acceptance");
      driver.open("/f1");
      driver.clear(Locator::by_name("x"));
      if (c.input)
        driver.type(Locator::by_name("x"), *c.input);
      auto kernel = driver.click(Locator::by_name(app.forms[0].submit_name)).outcome;
      if (!(kernel == oracle))
        tally.fail("kernel vs field_accepts on " + c.input.value_or("<empty>"));
    }
  }
  return tally.result(std::to_string(specs) + " field specs, " + std::to_string(cases) + " cases");
}

Outcome brute_force_ranges() {
  std::mt19937 rng(4001);
  Tally tally;
  int probes = 0;
  for (int r = 0; r < 50; ++r) {
    std::int64_t lo = std::uniform_int_distribution<std::int64_t>(-100, 100)(rng);
    std::int64_t hi = lo + std::uniform_int_distribution<std::int64_t>(0, 20)(rng);
    AppSpec app = single_form_app({integer_field("x", true, lo, hi)});
    Site site(app, counter());
    for (std::int64_t v = lo - 2; v <= hi + 2; ++v) {
      ++probes;
      auto got = site.submit_values("/f1", "acceptance", {{"x", std::to_string(v)}});
      if (!got || got->outcome.accepted != (lo <= v && v <= hi))
        tally.fail(std::to_string(v) + " in [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
    }
    // The four boundary values; at_min and at_max share one case when lo == hi.
    const std::set<std::string> bounds{std::to_string(lo - 1), std::to_string(lo), std::to_string(hi),
                                       std::to_string(hi + 1)};
    std::set<std::string> seen;
    for (const auto& c : gen::generate_field_cases(app.forms[0].fields[0])) {
      if (c.category != gen::CaseCategory::at_min && c.category != gen::CaseCategory::at_max &&
          c.category != gen::CaseCategory::below_min && c.category != gen::CaseCategory::above_max)
        continue;
      seen.insert(c.input.value_or("<empty>"));
      const std::int64_t v = std::stoll(*c.input);
      if (c.expected.accepted != (lo <= v && v <= hi))
        tally.fail("case " + *c.input + " for [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
    }
    if (seen != bounds)
      tally.fail("boundary cases " + join(seen) + " for [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
  }
  return tally.result("50 ranges, " + std::to_string(probes) + " probes");
}

Outcome replay_determinism() {
  std::mt19937 rng(5001);
  TempDir dir;
  runner::RunStore store(dir.path());
  Tally tally;
  int suites = 0;
  while (suites < 40) {
    AppSpec app = random_app(rng);
    auto suite = generated_suite(app);
    if (!suite)
      continue;
    ++suites;
    auto a = run_fresh(app, *suite, &store);
    auto b = run_fresh(app, *suite, &store);
    if (statuses(a) != statuses(b) || snapshots(a) != snapshots(b))
      tally.fail("suite " + std::to_string(suites) + " records differ");
    if (!runner::diff_runs(a.run_id, b.run_id, store).empty())
      tally.fail("suite " + std::to_string(suites) + " diff not empty");
  }
  return tally.result(std::to_string(suites) + " generated suites run twice");
}

Outcome log_reconstruction() {
  std::mt19937 rng(6001);
  Tally tally;
  int suites = 0;
  for (; suites < 60; ++suites) {
    AppSpec app = random_app(rng);
    auto suite = random_action_suite(rng, app, false, true);
    Site* a = nullptr;
    auto run_a = run_fresh(app, suite, nullptr, &a);
    auto derived = logkit::derive_suite_from_log(a->log());
    dsl::TestSuite replayed;
    replayed.suite_id = "derived";
    for (const auto& d : derived.directives) {
      replayed.directives.push_back(d);
      replayed.directives.push_back({dsl::DisplayScreen{}, 0});
    }
    Site* b = nullptr;
    auto run_b = run_fresh(app, replayed, nullptr, &b);
    if (store_to_json(a->store()) != store_to_json(b->store()))
      tally.fail("suite " + std::to_string(suites) + " stores differ");
    if (snapshots(run_a) != snapshots(run_b))
      tally.fail("suite " + std::to_string(suites) + " snapshots differ");
  }
  return tally.result(std::to_string(suites) + " action suites");
}

Outcome checkpoint_semantics() {
  std::mt19937 rng(7001);
  Tally tally;
  int suites = 0, removals = 0;
  while (suites < 60) {
    AppSpec app = random_app(rng);
    auto suite = generated_suite(app);
    if (!suite)
      continue;
    ++suites;
    const auto& ds = suite->directives;
    auto* last = std::get_if<dsl::Expect>(&ds.back().action);
    auto* adds = last ? std::get_if<dsl::DbDiffAdds>(&last->assertion) : nullptr;
    if (!adds) {
      tally.fail("suite " + std::to_string(suites) + " has no final dbAdds");
      continue;
    }
    Site* site = nullptr;
    auto run = run_fresh(app, *suite, nullptr, &site);
    auto diff = site->diff_against(adds->label);
    if (run.steps.back().status != runner::StepStatus::ok ||
        static_cast<std::int64_t>(diff.added.size()) != adds->count || !diff.removed.empty() || !diff.changed.empty())
      tally.fail("suite " + std::to_string(suites) + " dbAdds " + std::to_string(adds->count) + " vs added " +
                 std::to_string(diff.added.size()));

    // Split into blocks: [checkpoint] (open ... displayScreen)* [dbAdds].
    std::vector<std::vector<dsl::Directive>> blocks;
    for (std::size_t i = 1; i + 1 < ds.size(); ++i) {
      if (std::holds_alternative<dsl::Open>(ds[i].action))
        blocks.emplace_back();
      blocks.back().push_back(ds[i]);
    }
    auto accepted = [](const std::vector<dsl::Directive>& block) {
      for (const auto& d : block)
        if (auto* e = std::get_if<dsl::Expect>(&d.action))
          return std::holds_alternative<dsl::ExpectAccepted>(e->assertion);
      return false;
    };
    auto rebuild = [&](const std::function<bool(std::size_t)>& keep) {
      dsl::TestSuite s;
      s.suite_id = suite->suite_id;
      s.directives.push_back(ds.front());
      for (std::size_t b = 0; b < blocks.size(); ++b)
        if (keep(b))
          s.directives.insert(s.directives.end(), blocks[b].begin(), blocks[b].end());
      return s;
    };

    auto rejected_only = rebuild([&](std::size_t b) { return !accepted(blocks[b]); });
    Site* r = nullptr;
    run_fresh(app, rejected_only, nullptr, &r);
    if (!r->diff_against(adds->label).empty())
      tally.fail("suite " + std::to_string(suites) + " rejected-only diff not empty");

    std::vector<std::size_t> accepted_blocks;
    for (std::size_t b = 0; b < blocks.size(); ++b)
      if (accepted(blocks[b]))
        accepted_blocks.push_back(b);
    if (accepted_blocks.empty())
      continue;
    ++removals;
    std::size_t drop = accepted_blocks[std::uniform_int_distribution<std::size_t>(0, accepted_blocks.size() - 1)(rng)];
    auto shorter = rebuild([&](std::size_t b) { return b != drop; });
    shorter.directives.push_back(ds.back());
    auto run_short = run_fresh(app, shorter, nullptr);
    for (std::size_t i = 0; i < run_short.steps.size(); ++i) {
      const bool is_last = i + 1 == run_short.steps.size();
      const auto want = is_last ? runner::StepStatus::assertion_failed : runner::StepStatus::ok;
      if (run_short.steps[i].status != want)
        tally.fail("suite " + std::to_string(suites) + " removal changed step " + std::to_string(i));
    }
  }
  return tally.result(std::to_string(suites) + " suites, " + std::to_string(removals) + " removals");
}

AppSpec inventory_app() {
  FieldSpec price;
  price.entity_name = "price";
  price.data_type = DataType::numeric;
  price.required = true;
  FieldSpec name;
  name.entity_name = "name";
  name.data_type = DataType::text;
  return single_form_app({integer_field("id", true, 1, 1000), price, name});
}

Outcome agent_repair() {
  std::mt19937 rng(8001);
  Tally tally;
  agents::AgentSpec spec;
  spec.agent_id = "sync";
  spec.form_id = "f1";
  spec.key_fields = {"id"};
  spec.compare_fields = {"price", "name"};
  spec.numeric_tolerance = *Decimal::parse_numeric("0.5");
  const int rows = 15;
  int combos = 0;
  for (int k = 1; k <= 5; ++k)
    for (int m = 1; m <= 5; ++m) {
      ++combos;
      std::vector<int> ids(rows);
      for (int i = 0; i < rows; ++i)
        ids[static_cast<std::size_t>(i)] = i + 1;
      std::shuffle(ids.begin(), ids.end(), rng);
      std::set<int> missing(ids.begin(), ids.begin() + k);
      std::set<int> altered(ids.begin() + k, ids.begin() + k + m);
      Site a(inventory_app(), counter()), b(inventory_app(), counter());
      for (int id = 1; id <= rows; ++id) {
        std::string price = std::to_string(id * 3) + ".25";
        std::string name = id % 3 ? "item " + std::to_string(id) : "";
        a.submit_values("/f1", "seed", {{"id", std::to_string(id)}, {"price", price}, {"name", name}});
        if (missing.count(id))
          continue;
        if (altered.count(id))
          price = std::to_string(id * 3 + 1) + ".25";
        b.submit_values("/f1", "seed", {{"id", std::to_string(id)}, {"price", price}, {"name", name}});
      }
      agents::InProcessAgentSite sa(a), sb(b);
      CounterClock clock;
      auto count = [](const agents::AgentReport& r, agents::FindingKind kind) {
        return static_cast<int>(std::count_if(r.findings.begin(), r.findings.end(),
                                              [&](const agents::AgentFinding& f) { return f.kind == kind; }));
      };
      const std::string tag = "k=" + std::to_string(k) + " m=" + std::to_string(m);
      auto report = agents::run_agent(spec, sa, sb, clock);
      if (count(report, agents::FindingKind::missing_in_b) != k ||
          count(report, agents::FindingKind::value_mismatch) != m || report.findings.size() != std::size_t(k + m))
        tally.fail(tag + " first pass");
      auto plan = agents::emit_repair_suite(report, spec, b.app().forms[0]);
      runner::InProcessDriver driver(b, plan.suite.userid);
      auto repair = runner::execute_suite(dsl::parse_suite(plan.text(), plan.suite.suite_id), driver, nullptr);
      if (repair.verdict != runner::Verdict::pass)
        tally.fail(tag + " repair verdict " + std::string(to_string(repair.verdict)));
      auto after = agents::run_agent(spec, sa, sb, clock);
      if (count(after, agents::FindingKind::value_mismatch) != m || after.findings.size() != std::size_t(m))
        tally.fail(tag + " after repair");
    }
  return tally.result(std::to_string(combos) + " (k, m) combinations");
}

Outcome dsl_round_trip() {
  std::mt19937 rng(9001);
  Tally tally;
  for (int i = 0; i < 1000; ++i) {
    auto s = random_suite(rng);
    auto text = dsl::serialize_suite(s);
    if (!(dsl::parse_suite(text, s.suite_id) == s))
      tally.fail("suite " + std::to_string(i));
  }
  auto braced = dsl::parse_suite(read_text_file(data_path("worked_sequence.suite")), "w");
  auto quoted = dsl::parse_suite("open \"/f1\"\nclear \"name=variable1\"\nclick \"name=actionSubmit\"\ndisplayScreen\n"
                                 "open \"/f1\"\nclear \"name=variable1\"\ntype \"name=variable1\",\"0\"\n"
                                 "click \"name=actionSubmit\"\ndisplayScreen\n",
                                 "w");
  auto mixed = dsl::parse_suite("open (/f1)\nclear {name=variable1}\nclick (name=actionSubmit)\ndisplayScreen\n"
                                "open /f1\nclear name=variable1\ntype (name=variable1, 0)\n"
                                "click {name=actionSubmit}\ndisplayScreen\n",
                                "w");
  if (!(braced == quoted) || !(mixed == quoted))
    tally.fail("mixed spellings do not normalize");
  return tally.result("1000 random suites, mixed spellings");
}

Outcome driver_equivalence() {
  std::mt19937 rng(10001);
  Tally tally;
  for (int i = 0; i < 20; ++i) {
    AppSpec app = random_app(rng);
    auto suite = random_action_suite(rng, app, true, false);
    if (std::uniform_int_distribution<int>(0, 3)(rng) == 0)
      suite.directives.push_back({dsl::Open{"/elsewhere"}, 0});
    auto local = run_fresh(app, suite);
    Site served(app, counter());
    WireServer server(served, {"127.0.0.1", 0});
    server.start();
    runner::WireDriver driver({"127.0.0.1", server.port()}, "acceptance");
    auto remote = runner::execute_suite(suite, driver, nullptr);
    server.stop();
    if (statuses(local) != statuses(remote))
      tally.fail("suite " + std::to_string(i) + ": " + dsl::serialize_suite(suite));
  }
  return tally.result("20 suites in-process and over loopback");
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"boundary values for [0,250]", boundary_values},
      {"worked sequence", worked_sequence},
      {"generator agrees with field_accepts and the kernel", generator_oracle},
      {"brute-force integer ranges", brute_force_ranges},
      {"replay determinism", replay_determinism},
      {"log reconstruction", log_reconstruction},
      {"checkpoint semantics", checkpoint_semantics},
      {"agent detection and repair", agent_repair},
      {"DSL round trip", dsl_round_trip},
      {"driver equivalence", driver_equivalence},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::printf("%s %2zu %s: %s (%lld ms)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), static_cast<long long>(ms));
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
