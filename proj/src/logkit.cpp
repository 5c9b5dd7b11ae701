#include "metatest/logkit.hpp"

#include "metatest/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <map>

namespace metatest::logkit {

using ordered_json = nlohmann::ordered_json;

namespace {

bool is_action_entry(const LogEntry& e) {
  return e.action == LogAction::open || e.action == LogAction::clear || e.action == LogAction::type ||
         e.action == LogAction::click;
}

bool ok(const LogEntry& e) { return e.detail == "ok"; }

// "form.field" -> "field"; entities written for failed lookups may carry an
// empty form part.
std::string element_of(const LogEntry& e) {
  auto dot = e.entity.find('.');
  return dot == std::string::npos ? e.entity : e.entity.substr(dot + 1);
}

std::optional<dsl::Directive> to_directive(const LogEntry& e) {
  using namespace dsl;
  if (e.detail == "error:locator")
    return std::nullopt;
  try {
    switch (e.action) {
    case LogAction::open:
      if (e.new_value.empty())
        return std::nullopt;
      return Directive{Open{e.new_value}, 0};
    case LogAction::clear:
      return Directive{Clear{Locator::by_name(element_of(e))}, 0};
    case LogAction::type:
      return Directive{Type{Locator::by_name(element_of(e)), e.new_value}, 0};
    case LogAction::click:
      return Directive{Click{Locator::by_name(element_of(e))}, 0};
    default:
      return std::nullopt;
    }
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::vector<const LogEntry*> ordered(std::span<const LogEntry> entries) {
  std::vector<const LogEntry*> out;
  out.reserve(entries.size());
  for (const auto& e : entries)
    out.push_back(&e);
  std::stable_sort(out.begin(), out.end(), [](const LogEntry* a, const LogEntry* b) {
    return std::tie(a->timestamp_ms, a->seq) < std::tie(b->timestamp_ms, b->seq);
  });
  return out;
}

} // namespace

void check_log(std::span<const LogEntry> entries) {
  std::map<std::string, LogAction> last_by_session;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (i > 0) {
      if (e.seq <= entries[i - 1].seq)
        throw Error(ErrorCode::corrupt_log, "log seq " + std::to_string(e.seq) + " is not increasing");
      if (e.timestamp_ms < entries[i - 1].timestamp_ms)
        throw Error(ErrorCode::corrupt_log, "log seq " + std::to_string(e.seq) + " goes back in time");
    }
    if (e.action == LogAction::change) {
      auto it = last_by_session.find(e.session_id);
      if (it == last_by_session.end() ||
          (it->second != LogAction::submit_accepted && it->second != LogAction::change))
        throw Error(ErrorCode::corrupt_log,
                    "log seq " + std::to_string(e.seq) + " records a change without an accepted submit");
    }
    if (!e.session_id.empty())
      last_by_session[e.session_id] = e.action;
  }
}

dsl::TestSuite derive_suite_from_log(std::span<const LogEntry> entries, const std::set<std::string>& sessions) {
  check_log(entries);
  dsl::TestSuite suite;
  suite.suite_id = "derived";
  std::set<std::string> users;
  for (const LogEntry* e : ordered(entries)) {
    if (!is_action_entry(*e) || (!sessions.empty() && !sessions.count(e->session_id)))
      continue;
    if (auto d = to_directive(*e)) {
      suite.directives.push_back(std::move(*d));
      users.insert(e->userid);
    }
  }
  if (users.size() == 1 && !users.begin()->empty())
    suite.userid = *users.begin();
  return suite;
}

std::string RequestPattern::key() const {
  std::string k = form_id + "|" + (accepted ? "accepted" : "rejected") + "|";
  bool first = true;
  for (const auto& f : fields) {
    if (!first)
      k += ',';
    k += f;
    first = false;
  }
  return k;
}

namespace {

struct Occurrence {
  RequestPattern pattern;
  std::vector<dsl::Directive> actions;
};

// Walks the log per session and yields every submit request with the action
// sequence that produced it.
std::vector<Occurrence> occurrences(std::span<const LogEntry> entries) {
  struct SessionState {
    std::optional<std::string> form;
    std::string url;
    std::set<std::string> fields;
    std::vector<const LogEntry*> segment;
  };
  std::map<std::string, SessionState> states;
  std::vector<Occurrence> out;
  for (const LogEntry* e : ordered(entries)) {
    auto& st = states[e->session_id];
    switch (e->action) {
    case LogAction::open:
      st.fields.clear();
      st.segment = {e};
      st.url = e->new_value;
      st.form = ok(*e) ? std::optional<std::string>(e->entity) : std::nullopt;
      break;
    case LogAction::clear:
      st.segment.push_back(e);
      if (ok(*e))
        st.fields.erase(element_of(*e));
      break;
    case LogAction::type:
      st.segment.push_back(e);
      if (ok(*e))
        st.fields.insert(element_of(*e));
      break;
    case LogAction::click:
      st.segment.push_back(e);
      break;
    case LogAction::submit_accepted:
    case LogAction::submit_rejected: {
      Occurrence occ;
      occ.pattern.form_id = e->entity;
      occ.pattern.accepted = e->action == LogAction::submit_accepted;
      occ.pattern.fields = st.fields;
      if (st.segment.empty() || st.segment.front()->action != LogAction::open)
        occ.actions.push_back(dsl::Directive{dsl::Open{st.url}, 0});
      for (const LogEntry* a : st.segment)
        if (auto d = to_directive(*a))
          occ.actions.push_back(std::move(*d));
      const bool accepted = occ.pattern.accepted;
      out.push_back(std::move(occ));
      if (accepted) {
        st.fields.clear();
        st.segment.clear();
      } else {
        // The form keeps its values after a rejection; keep what built them.
        std::erase_if(st.segment, [](const LogEntry* a) { return a->action == LogAction::click; });
      }
      break;
    }
    default:
      break;
    }
  }
  return out;
}

} // namespace

std::vector<PatternCount> frequency_report(std::span<const LogEntry> entries) {
  std::map<std::string, PatternCount> by_key;
  for (auto& occ : occurrences(entries)) {
    auto& pc = by_key[occ.pattern.key()];
    pc.pattern = occ.pattern;
    ++pc.count;
  }
  std::vector<PatternCount> out;
  for (auto& [_, pc] : by_key)
    out.push_back(pc);
  std::stable_sort(out.begin(), out.end(), [](const PatternCount& a, const PatternCount& b) {
    if (a.count != b.count)
      return a.count > b.count;
    return a.pattern.key() < b.pattern.key();
  });
  return out;
}

dsl::TestSuite generate_perf_suite(std::span<const LogEntry> entries, int top_k, int repetitions) {
  if (top_k < 1 || repetitions < 1)
    throw Error(ErrorCode::invalid_argument, "top_k and repetitions must be >= 1");
  auto report = frequency_report(entries);
  if (report.empty())
    throw Error(ErrorCode::empty_log, "the log contains no submit requests");
  std::map<std::string, std::vector<dsl::Directive>> earliest;
  for (auto& occ : occurrences(entries))
    earliest.try_emplace(occ.pattern.key(), std::move(occ.actions));

  dsl::TestSuite suite;
  suite.suite_id = "perf";
  auto k = std::min<std::size_t>(static_cast<std::size_t>(top_k), report.size());
  for (int r = 0; r < repetitions; ++r)
    for (std::size_t i = 0; i < k; ++i) {
      const auto& seq = earliest.at(report[i].pattern.key());
      suite.directives.insert(suite.directives.end(), seq.begin(), seq.end());
    }
  return suite;
}

// ---------------------------------------------------------------------------

namespace {

std::optional<std::string> step_key(const runner::StepResult& step) {
  dsl::TestSuite one;
  try {
    one = dsl::parse_suite(step.directive, "step");
  } catch (const Error&) {
    return std::nullopt;
  }
  if (one.directives.size() != 1)
    return std::nullopt;
  const auto& a = one.directives.front().action;
  if (auto* o = std::get_if<dsl::Open>(&a))
    return "open:" + o->url;
  if (auto* c = std::get_if<dsl::Clear>(&a))
    return "clear:" + c->locator.name();
  if (auto* t = std::get_if<dsl::Type>(&a))
    return "type:" + t->locator.name() + "=" + t->text;
  if (auto* k = std::get_if<dsl::Click>(&a))
    return "click:" + k->locator.name();
  if (std::holds_alternative<dsl::DisplayScreen>(a))
    return std::string("snapshot");
  return std::nullopt;
}

std::optional<std::string> log_key(const LogEntry& e) {
  switch (e.action) {
  case LogAction::open: return "open:" + e.new_value;
  case LogAction::clear: return "clear:" + element_of(e);
  case LogAction::type: return "type:" + element_of(e) + "=" + e.new_value;
  case LogAction::click: return "click:" + element_of(e);
  case LogAction::snapshot: return std::string("snapshot");
  default: return std::nullopt;
  }
}

} // namespace

std::vector<Finding> self_test_engine(const runner::RunRecord& run, std::span<const LogEntry> site_log) {
  struct Item {
    std::string key;
    std::int64_t id;
  };
  std::vector<Item> steps, logs;
  for (const auto& s : run.steps)
    if (auto k = step_key(s))
      steps.push_back({*k, s.index});
  for (const auto& e : site_log)
    if (auto k = log_key(e))
      logs.push_back({*k, e.seq});

  // Longest common subsequence on the part that differs.
  std::size_t head = 0;
  while (head < steps.size() && head < logs.size() && steps[head].key == logs[head].key)
    ++head;
  std::size_t tail = 0;
  while (tail < steps.size() - head && tail < logs.size() - head &&
         steps[steps.size() - 1 - tail].key == logs[logs.size() - 1 - tail].key)
    ++tail;
  const std::size_t n = steps.size() - head - tail;
  const std::size_t m = logs.size() - head - tail;
  std::vector<std::vector<std::uint32_t>> lcs(n + 1, std::vector<std::uint32_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;)
    for (std::size_t j = m; j-- > 0;)
      lcs[i][j] = steps[head + i].key == logs[head + j].key ? lcs[i + 1][j + 1] + 1
                                                             : std::max(lcs[i + 1][j], lcs[i][j + 1]);

  std::vector<Finding> findings;
  auto missing_step = [&](const Item& l) {
    findings.push_back({"missing_step", "missing step for log seq " + std::to_string(l.id), l.id, std::nullopt});
  };
  auto missing_log = [&](const Item& s) {
    findings.push_back({"missing_log_entry", "missing log entry for step " + std::to_string(s.id), std::nullopt,
                        static_cast<int>(s.id)});
  };
  std::size_t i = 0, j = 0;
  while (i < n || j < m) {
    if (i < n && j < m && steps[head + i].key == logs[head + j].key) {
      ++i;
      ++j;
    } else if (j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j])) {
      missing_step(logs[head + j++]);
    } else {
      missing_log(steps[head + i++]);
    }
  }
  return findings;
}

std::string to_csv(std::span<const LogEntry> entries) {
  auto field = [](const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos)
      return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"')
        out += '"';
      out += c;
    }
    return out + "\"";
  };
  std::string out = "seq,timestamp_ms,session_id,userid,action,entity,old_value,new_value\n";
  for (const auto& e : entries) {
    out += std::to_string(e.seq) + "," + std::to_string(e.timestamp_ms) + "," + field(e.session_id) + "," +
           field(e.userid) + "," + std::string(to_string(e.action)) + "," + field(e.entity) + "," +
           field(e.old_value) + "," + field(e.new_value) + "\n";
  }
  return out;
}

std::string report_to_json(const std::vector<PatternCount>& report) {
  ordered_json j = ordered_json::array();
  for (const auto& pc : report) {
    ordered_json x;
    x["form_id"] = pc.pattern.form_id;
    x["outcome"] = pc.pattern.accepted ? "accepted" : "rejected";
    x["fields"] = pc.pattern.fields;
    x["count"] = pc.count;
    j.push_back(x);
  }
  return j.dump(2);
}

std::string findings_to_json(const std::vector<Finding>& findings) {
  ordered_json j = ordered_json::array();
  for (const auto& f : findings) {
    ordered_json x;
    x["kind"] = f.kind;
    x["message"] = f.message;
    x["log_seq"] = f.log_seq ? ordered_json(*f.log_seq) : ordered_json(nullptr);
    x["step_index"] = f.step_index ? ordered_json(*f.step_index) : ordered_json(nullptr);
    j.push_back(x);
  }
  return j.dump(2);
}

} // namespace metatest::logkit
