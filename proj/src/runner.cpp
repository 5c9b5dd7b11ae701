#include "metatest/runner.hpp"

#include "metatest/error.hpp"

#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace metatest::runner {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view to_string(StepStatus status) {
  switch (status) {
  case StepStatus::ok: return "ok";
  case StepStatus::assertion_failed: return "assertion_failed";
  case StepStatus::step_error: return "step_error";
  case StepStatus::unsupported: return "unsupported";
  }
  return "ok";
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
  case Verdict::pass: return "pass";
  case Verdict::fail: return "fail";
  case Verdict::error: return "error";
  }
  return "error";
}

namespace {

std::optional<StepStatus> parse_status(std::string_view s) {
  for (auto v : {StepStatus::ok, StepStatus::assertion_failed, StepStatus::step_error, StepStatus::unsupported})
    if (to_string(v) == s)
      return v;
  return std::nullopt;
}

std::optional<Verdict> parse_verdict(std::string_view s) {
  for (auto v : {Verdict::pass, Verdict::fail, Verdict::error})
    if (to_string(v) == s)
      return v;
  return std::nullopt;
}

std::string describe(const ValidationOutcome& outcome) {
  if (outcome.accepted)
    return "accepted";
  std::string out = "rejected:";
  for (const auto& f : outcome.failures)
    out += " " + f.field + ":" + std::string(to_string(f.code));
  return out;
}

} // namespace

// ---------------------------------------------------------------------------

InProcessDriver::InProcessDriver(Site& site, std::string userid)
    : site_(site), session_(site.create_session(std::move(userid))) {}

void InProcessDriver::open(const std::string& url) { site_.open(session_, url); }
void InProcessDriver::clear(const Locator& locator) { site_.clear(session_, locator.text()); }
void InProcessDriver::type(const Locator& locator, const std::string& text) {
  site_.type(session_, locator.text(), text);
}
ClickResult InProcessDriver::click(const Locator& locator) { return site_.click(session_, locator.text()); }
std::string InProcessDriver::snapshot() { return site_.snapshot(session_); }
void InProcessDriver::checkpoint(const std::string& label) { site_.checkpoint(label); }
CheckpointDiff InProcessDriver::diff(const std::string& label) { return site_.diff_against(label); }

WireDriver::WireDriver(Address address, std::string userid)
    : client_(std::move(address)), userid_(std::move(userid)) {}

void WireDriver::open(const std::string& url) {
  field_state_.clear();
  last_outcome_.reset();
  form_ = client_.get_form(url);
  if (!form_)
    throw Error(ErrorCode::navigation, "no form at \"" + url + "\"");
  url_ = url;
}

const FieldSpec* WireDriver::field_or_throw(const Locator& locator) const {
  if (!form_)
    throw Error(ErrorCode::no_form, "no form is open");
  if (const FieldSpec* f = form_->find_field(locator.name()))
    return f;
  throw Error(ErrorCode::element_not_found,
              "no element named \"" + locator.name() + "\" on form " + form_->form_id);
}

void WireDriver::clear(const Locator& locator) { field_state_.erase(field_or_throw(locator)->entity_name); }

void WireDriver::type(const Locator& locator, const std::string& text) {
  field_state_[field_or_throw(locator)->entity_name] = text;
}

ClickResult WireDriver::click(const Locator& locator) {
  if (!form_)
    throw Error(ErrorCode::no_form, "no form is open");
  if (locator.name() != form_->submit_name) {
    field_or_throw(locator);
    return {};
  }
  auto response = client_.post(url_, field_state_, userid_);
  if (!response.found)
    throw Error(ErrorCode::navigation, "form at \"" + url_ + "\" disappeared");
  last_outcome_ = response.result.outcome;
  if (response.result.outcome.accepted)
    field_state_.clear();
  return response.result;
}

std::string WireDriver::snapshot() {
  return render_snapshot(form_ ? &*form_ : nullptr, field_state_, last_outcome_);
}

void WireDriver::checkpoint(const std::string&) {
  throw Error(ErrorCode::invalid_argument, "checkpoints are not available over the wire protocol");
}

CheckpointDiff WireDriver::diff(const std::string&) {
  throw Error(ErrorCode::invalid_argument, "checkpoints are not available over the wire protocol");
}

// ---------------------------------------------------------------------------

std::string suite_hash(std::string_view suite_text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : suite_text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

ordered_json step_json(const StepResult& s) {
  ordered_json j;
  j["index"] = s.index;
  j["directive"] = s.directive;
  j["status"] = to_string(s.status);
  j["detail"] = s.detail;
  j["snapshot"] = s.snapshot ? ordered_json(*s.snapshot) : ordered_json(nullptr);
  j["timestamp_ms"] = s.timestamp_ms;
  return j;
}

StepResult step_from(const json& j) {
  StepResult s;
  s.index = j.at("index").get<int>();
  s.directive = j.at("directive").get<std::string>();
  auto status = parse_status(j.at("status").get<std::string>());
  if (!status)
    throw Error(ErrorCode::integrity, "unknown step status");
  s.status = *status;
  s.detail = j.value("detail", "");
  if (j.contains("snapshot") && j.at("snapshot").is_string())
    s.snapshot = j.at("snapshot").get<std::string>();
  s.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
  return s;
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out)
    throw Error(ErrorCode::io, "cannot append to " + path.string());
  out << line << '\n';
  out.flush();
  if (!out)
    throw Error(ErrorCode::io, "write failed on " + path.string());
}

} // namespace

RunStore::RunStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec)
    throw Error(ErrorCode::io, "cannot create run store " + dir_.string() + ": " + ec.message());
}

fs::path RunStore::run_path(const std::string& run_id) const { return dir_ / (run_id + ".jsonl"); }

std::vector<std::string> RunStore::run_ids() const {
  std::vector<std::string> ids;
  std::ifstream in(dir_ / "index.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    try {
      ids.push_back(json::parse(line).at("run_id").get<std::string>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::integrity, std::string("corrupt run index: ") + e.what());
    }
  }
  return ids;
}

std::string RunStore::begin_run(const RunRecord& header) {
  auto n = run_ids().size() + 1;
  std::string id;
  do {
    char buf[32];
    std::snprintf(buf, sizeof buf, "run-%04zu", n++);
    id = buf;
  } while (fs::exists(run_path(id)));

  ordered_json h;
  h["kind"] = "header";
  h["run_id"] = id;
  h["suite_id"] = header.suite_id;
  h["suite_hash"] = header.suite_hash;
  h["suite_text"] = header.suite_text;
  h["target"] = header.target;
  h["started_ms"] = header.started_ms;
  append_line(run_path(id), h.dump());

  ordered_json idx;
  idx["run_id"] = id;
  idx["suite_id"] = header.suite_id;
  idx["suite_hash"] = header.suite_hash;
  idx["started_ms"] = header.started_ms;
  append_line(dir_ / "index.jsonl", idx.dump());
  return id;
}

void RunStore::append_step(const std::string& run_id, const StepResult& step) {
  ordered_json j = step_json(step);
  j["kind"] = "step";
  append_line(run_path(run_id), j.dump());
}

void RunStore::finish_run(const std::string& run_id, Verdict verdict) {
  ordered_json j;
  j["kind"] = "end";
  j["verdict"] = to_string(verdict);
  append_line(run_path(run_id), j.dump());
}

RunRecord RunStore::load(const std::string& run_id) const {
  std::ifstream in(run_path(run_id), std::ios::binary);
  if (!in)
    throw Error(ErrorCode::unknown_run, "unknown run \"" + run_id + "\"");
  RunRecord run;
  run.complete = false;
  bool have_header = false;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty())
        continue;
      json j = json::parse(line);
      auto kind = j.at("kind").get<std::string>();
      if (kind == "header") {
        have_header = true;
        run.run_id = j.at("run_id").get<std::string>();
        run.suite_id = j.at("suite_id").get<std::string>();
        run.suite_hash = j.at("suite_hash").get<std::string>();
        run.suite_text = j.at("suite_text").get<std::string>();
        run.target = j.value("target", "");
        run.started_ms = j.value("started_ms", std::int64_t{0});
      } else if (kind == "step") {
        run.steps.push_back(step_from(j));
      } else if (kind == "end") {
        auto v = parse_verdict(j.at("verdict").get<std::string>());
        if (!v)
          throw Error(ErrorCode::integrity, "unknown verdict in run " + run_id);
        run.verdict = *v;
        run.complete = true;
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::integrity, "corrupt run file " + run_id + ": " + e.what());
  }
  if (!have_header)
    throw Error(ErrorCode::integrity, "run file " + run_id + " has no header");
  if (!run.complete)
    run.verdict = Verdict::error;
  return run;
}

// ---------------------------------------------------------------------------

namespace {

template <class... Ts> struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

struct ExecState {
  std::optional<ValidationOutcome> last_outcome;
  std::optional<std::string> last_snapshot;
};

void run_step(const dsl::Directive& d, Driver& driver, ExecState& state, StepResult& step) {
  using namespace dsl;
  auto unsupported = [&] {
    step.status = StepStatus::unsupported;
    step.detail = "checkpoints are not available on this driver";
  };
  auto need_outcome = [&]() -> const ValidationOutcome& {
    if (!state.last_outcome)
      throw Error(ErrorCode::invalid_argument, "no outcome to assert");
    return *state.last_outcome;
  };
  auto check = [&](bool ok, std::string detail) {
    step.status = ok ? StepStatus::ok : StepStatus::assertion_failed;
    step.detail = std::move(detail);
  };

  std::visit(
      overloaded{
          [&](const Open& a) {
            state.last_outcome.reset();
            driver.open(a.url);
          },
          [&](const Clear& a) { driver.clear(a.locator); },
          [&](const Type& a) { driver.type(a.locator, a.text); },
          [&](const Click& a) {
            auto r = driver.click(a.locator);
            if (r.submitted) {
              state.last_outcome = r.outcome;
              step.detail = describe(r.outcome);
              if (r.record_seq)
                step.detail += " record_seq=" + std::to_string(*r.record_seq);
            } else {
              step.detail = "clicked";
            }
          },
          [&](const DisplayScreen&) {
            step.snapshot = driver.snapshot();
            state.last_snapshot = step.snapshot;
          },
          [&](const CheckpointDB& a) {
            if (!driver.supports_checkpoints())
              return unsupported();
            driver.checkpoint(a.label);
          },
          [&](const CompareDB& a) {
            if (!driver.supports_checkpoints())
              return unsupported();
            auto diff = driver.diff(a.label);
            step.detail = "added=" + std::to_string(diff.added.size()) +
                          " removed=" + std::to_string(diff.removed.size()) +
                          " changed=" + std::to_string(diff.changed.size());
          },
          [&](const Expect& e) {
            std::visit(
                overloaded{
                    [&](const ExpectAccepted&) {
                      const auto& o = need_outcome();
                      check(o.accepted, o.accepted ? "accepted" : "expected accepted, got " + describe(o));
                    },
                    [&](const ExpectRejected& r) {
                      const auto& o = need_outcome();
                      bool hit = false;
                      for (const auto& f : o.failures)
                        if (f.field == r.field && (!r.code || f.code == *r.code))
                          hit = true;
                      std::string want = "rejected " + r.field;
                      if (r.code)
                        want += ":" + std::string(to_string(*r.code));
                      check(!o.accepted && hit, hit ? describe(o) : "expected " + want + ", got " + describe(o));
                    },
                    [&](const ScreenContains& s) {
                      if (!state.last_snapshot)
                        throw Error(ErrorCode::invalid_argument, "no snapshot to assert");
                      bool ok = state.last_snapshot->find(s.text) != std::string::npos;
                      check(ok, ok ? "found" : "screen does not contain " + quote(s.text));
                    },
                    [&](const DbDiffAdds& a) {
                      if (!driver.supports_checkpoints())
                        return unsupported();
                      auto diff = driver.diff(a.label);
                      bool ok = diff.added.size() == static_cast<std::size_t>(a.count) && diff.removed.empty() &&
                                diff.changed.empty();
                      check(ok, "added=" + std::to_string(diff.added.size()) +
                                    " removed=" + std::to_string(diff.removed.size()) +
                                    " changed=" + std::to_string(diff.changed.size()) +
                                    " expected added=" + std::to_string(a.count));
                    },
                },
                e.assertion);
          },
      },
      d.action);
}

} // namespace

RunRecord execute_suite(const dsl::TestSuite& suite, Driver& driver, RunStore* store, const ExecOptions& options) {
  std::shared_ptr<Clock> clock = options.clock ? options.clock : std::make_shared<CounterClock>();
  RunRecord run;
  run.suite_id = suite.suite_id;
  run.suite_text = dsl::serialize_suite(suite);
  run.suite_hash = suite_hash(run.suite_text);
  run.target = options.target;
  run.started_ms = clock->now_ms();
  if (store)
    run.run_id = store->begin_run(run);

  ExecState state;
  bool errored = false;
  for (std::size_t i = 0; i < suite.directives.size(); ++i) {
    if (i > 0 && options.step_delay_ms > 0)
      clock->sleep_for(options.step_delay_ms);
    const auto& d = suite.directives[i];
    StepResult step;
    step.index = static_cast<int>(i);
    step.directive = dsl::to_text(d);
    try {
      run_step(d, driver, state, step);
    } catch (const Error& e) {
      step.status = StepStatus::step_error;
      step.detail = std::string(metatest::to_string(e.code())) + ": " + e.what();
    }
    step.timestamp_ms = clock->now_ms();
    if (store)
      store->append_step(run.run_id, step);
    errored = step.status == StepStatus::step_error;
    run.steps.push_back(std::move(step));
    if (errored)
      break;
  }

  run.verdict = Verdict::pass;
  for (const auto& s : run.steps) {
    if (s.status == StepStatus::step_error) {
      run.verdict = Verdict::error;
      break;
    }
    if (s.status != StepStatus::ok)
      run.verdict = Verdict::fail;
  }
  if (store)
    store->finish_run(run.run_id, run.verdict);
  return run;
}

RunDiff diff_runs(const RunRecord& a, const RunRecord& b) {
  RunDiff diff;
  diff.steps_a = a.steps.size();
  diff.steps_b = b.steps.size();
  auto n = std::max(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < n; ++i) {
    const StepResult* sa = i < a.steps.size() ? &a.steps[i] : nullptr;
    const StepResult* sb = i < b.steps.size() ? &b.steps[i] : nullptr;
    StepDelta delta;
    delta.index = static_cast<int>(i);
    delta.directive = sa ? sa->directive : sb->directive;
    if (sa)
      delta.status_a = sa->status;
    if (sb)
      delta.status_b = sb->status;
    delta.snapshot_changed = sa && sb && sa->snapshot != sb->snapshot;
    if (!sa || !sb || sa->status != sb->status || delta.snapshot_changed)
      diff.deltas.push_back(std::move(delta));
  }
  return diff;
}

RunDiff diff_runs(const std::string& a, const std::string& b, const RunStore& store) {
  auto ra = store.load(a);
  auto rb = store.load(b);
  if (ra.suite_hash != rb.suite_hash)
    throw Error(ErrorCode::incomparable_runs,
                "runs " + a + " and " + b + " executed different suites (" + ra.suite_hash + " vs " +
                    rb.suite_hash + ")");
  return diff_runs(ra, rb);
}

std::pair<RunRecord, RunDiff> replay_run(const std::string& run_id, Driver& driver, RunStore& store,
                                         const ExecOptions& options) {
  RunRecord original = store.load(run_id);
  if (suite_hash(original.suite_text) != original.suite_hash)
    throw Error(ErrorCode::integrity, "stored suite text of " + run_id + " does not match its hash");
  auto suite = dsl::parse_suite(original.suite_text, original.suite_id);
  ExecOptions opts = options;
  if (opts.target.empty())
    opts.target = original.target;
  RunRecord replay = execute_suite(suite, driver, &store, opts);
  if (replay.suite_hash != original.suite_hash)
    throw Error(ErrorCode::integrity, "replayed suite of " + run_id + " does not reproduce the stored text");
  RunDiff diff = diff_runs(original, replay);
  return {std::move(replay), std::move(diff)};
}

std::string run_to_json(const RunRecord& run) {
  ordered_json j;
  j["run_id"] = run.run_id;
  j["suite_id"] = run.suite_id;
  j["suite_hash"] = run.suite_hash;
  j["target"] = run.target;
  j["started_ms"] = run.started_ms;
  j["verdict"] = to_string(run.verdict);
  j["complete"] = run.complete;
  j["suite_text"] = run.suite_text;
  j["steps"] = ordered_json::array();
  for (const auto& s : run.steps)
    j["steps"].push_back(step_json(s));
  return j.dump(2);
}

std::string diff_to_json(const RunDiff& diff) {
  ordered_json j;
  j["steps_a"] = diff.steps_a;
  j["steps_b"] = diff.steps_b;
  j["deltas"] = ordered_json::array();
  for (const auto& d : diff.deltas) {
    ordered_json x;
    x["index"] = d.index;
    x["directive"] = d.directive;
    x["status_a"] = d.status_a ? ordered_json(to_string(*d.status_a)) : ordered_json(nullptr);
    x["status_b"] = d.status_b ? ordered_json(to_string(*d.status_b)) : ordered_json(nullptr);
    x["snapshot_changed"] = d.snapshot_changed;
    j["deltas"].push_back(x);
  }
  return j.dump(2);
}

} // namespace metatest::runner
