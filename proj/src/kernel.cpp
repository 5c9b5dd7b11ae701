#include "metatest/kernel.hpp"

#include "metatest/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace metatest {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::int64_t CounterClock::now_ms() {
  std::lock_guard lock(mu_);
  auto t = next_;
  next_ += step_;
  return t;
}

void CounterClock::sleep_for(std::int64_t ms) {
  std::lock_guard lock(mu_);
  next_ += std::max<std::int64_t>(ms, 0);
}

std::int64_t SystemClock::now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_for(std::int64_t ms) {
  if (ms > 0)
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

std::string_view to_string(LogAction action) {
  switch (action) {
  case LogAction::open: return "open";
  case LogAction::clear: return "clear";
  case LogAction::type: return "type";
  case LogAction::click: return "click";
  case LogAction::submit_accepted: return "submit_accepted";
  case LogAction::submit_rejected: return "submit_rejected";
  case LogAction::snapshot: return "snapshot";
  case LogAction::change: return "change";
  case LogAction::agent: return "agent";
  }
  return "open";
}

std::optional<LogAction> parse_log_action(std::string_view text) {
  for (auto a : {LogAction::open, LogAction::clear, LogAction::type, LogAction::click,
                 LogAction::submit_accepted, LogAction::submit_rejected, LogAction::snapshot,
                 LogAction::change, LogAction::agent})
    if (to_string(a) == text)
      return a;
  return std::nullopt;
}

std::string quote(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    switch (c) {
    case '"': out += "\\\""; break;
    case '\\': out += "\\\\"; break;
    case '\n': out += "\\n"; break;
    case '\r': out += "\\r"; break;
    case '\t': out += "\\t"; break;
    default: out += c;
    }
  }
  out += '"';
  return out;
}

std::string render_snapshot(const FormSpec* form, const std::map<std::string, std::string>& field_state,
                            const std::optional<ValidationOutcome>& last_outcome) {
  std::string out = "FORM ";
  out += form ? form->form_id : "-";
  out += '\n';
  if (form) {
    for (const auto& f : form->fields) {
      out += "FIELD " + f.entity_name + " TYPE " + std::string(to_string(f.data_type)) + " VALUE ";
      auto it = field_state.find(f.entity_name);
      out += it == field_state.end() ? "-" : quote(it->second);
      out += " DIAG ";
      std::string diag;
      if (last_outcome)
        for (const auto& failure : last_outcome->failures)
          if (failure.field == f.entity_name) {
            if (!diag.empty())
              diag += ',';
            diag += to_string(failure.code);
          }
      out += diag.empty() ? "-" : diag;
      out += '\n';
    }
  }
  out += "STATUS ";
  out += !last_outcome ? "-" : (last_outcome->accepted ? "accepted" : "rejected");
  out += '\n';
  return out;
}

CheckpointDiff diff_stores(const RecordStore& before, const RecordStore& after) {
  CheckpointDiff diff;
  std::set<std::string> forms;
  for (auto& [id, _] : before.tables)
    forms.insert(id);
  for (auto& [id, _] : after.tables)
    forms.insert(id);
  static const Table empty;
  for (const auto& form_id : forms) {
    auto b = before.tables.find(form_id);
    auto a = after.tables.find(form_id);
    const Table& old_rows = b == before.tables.end() ? empty : b->second;
    const Table& new_rows = a == after.tables.end() ? empty : a->second;
    std::map<std::int64_t, const Row*> old_by_seq, new_by_seq;
    for (auto& r : old_rows)
      old_by_seq[r.record_seq] = &r;
    for (auto& r : new_rows)
      new_by_seq[r.record_seq] = &r;
    for (auto& [seq, row] : new_by_seq) {
      auto it = old_by_seq.find(seq);
      if (it == old_by_seq.end())
        diff.added.push_back({form_id, seq, std::nullopt, *row});
      else if (it->second->values != row->values)
        diff.changed.push_back({form_id, seq, *it->second, *row});
    }
    for (auto& [seq, row] : old_by_seq)
      if (!new_by_seq.count(seq))
        diff.removed.push_back({form_id, seq, *row, std::nullopt});
  }
  return diff;
}

// ---------------------------------------------------------------------------

Site::Site(AppSpec app, std::shared_ptr<Clock> clock) : app_(std::move(app)), clock_(std::move(clock)) {
  auto diagnostics = validate_app_spec(app_);
  if (has_errors(diagnostics)) {
    std::string message = "metadata rejected:";
    for (const auto& d : diagnostics)
      if (d.severity == Severity::error)
        message += " [" + d.location + "] " + d.message + ";";
    throw Error(ErrorCode::invalid_metadata, message);
  }
  if (!clock_)
    clock_ = std::make_shared<CounterClock>();
  for (const auto& form : app_.forms)
    store_.tables[form.form_id];
}

std::string Site::create_session(std::string userid) {
  std::lock_guard lock(mu_);
  std::string id = "s" + std::to_string(next_session_seq_++);
  Session s;
  s.session_id = id;
  s.userid = std::move(userid);
  sessions_.emplace(id, std::move(s));
  return id;
}

Session& Site::session_locked(const std::string& session_id) {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end())
    throw Error(ErrorCode::invalid_argument, "unknown session \"" + session_id + "\"");
  return it->second;
}

LogEntry& Site::append_locked(const Session* s, LogAction action, std::string entity, std::string old_value,
                              std::string new_value, std::string detail) {
  LogEntry e;
  e.seq = next_log_seq_++;
  e.timestamp_ms = clock_->now_ms();
  if (!log_.empty())
    e.timestamp_ms = std::max(e.timestamp_ms, log_.back().timestamp_ms);
  if (s) {
    e.session_id = s->session_id;
    e.userid = s->userid;
  }
  e.action = action;
  e.entity = std::move(entity);
  e.old_value = std::move(old_value);
  e.new_value = std::move(new_value);
  e.detail = std::move(detail);
  log_.push_back(std::move(e));
  return log_.back();
}

void Site::emit_locked(std::size_t first) {
  if (!sink_)
    return;
  for (std::size_t i = first; i < log_.size(); ++i)
    sink_(log_[i]);
}

void Site::open(const std::string& session_id, std::string_view url_path) {
  std::lock_guard lock(mu_);
  Session& s = session_locked(session_id);
  auto mark = log_.size();
  s.field_state.clear();
  s.last_outcome.reset();
  const FormSpec* form = app_.find_form_by_url(url_path);
  if (!form) {
    s.current_form.reset();
    append_locked(&s, LogAction::open, "", "", std::string(url_path), "error:navigation");
    emit_locked(mark);
    throw Error(ErrorCode::navigation, "no form at \"" + std::string(url_path) + "\"");
  }
  s.current_form = form->form_id;
  append_locked(&s, LogAction::open, form->form_id, "", std::string(url_path), "ok");
  emit_locked(mark);
}

// Resolves a field-or-control locator; on failure logs the attempted action
// and throws. Returns nullptr for the form's submit control.
const FieldSpec* Site::resolve_field_locked(Session& s, std::string_view locator, LogAction action,
                                            std::string_view new_value) {
  std::string form_id = s.current_form.value_or("");
  auto fail = [&](ErrorCode code, const std::string& name, const std::string& message) {
    auto mark = log_.size();
    append_locked(&s, action, form_id + "." + name, "", std::string(new_value),
                  "error:" + std::string(to_string(code)));
    emit_locked(mark);
    throw Error(code, message);
  };
  std::string name;
  try {
    name = Locator::parse(locator).name();
  } catch (const Error& e) {
    fail(ErrorCode::locator, std::string(locator), e.what());
  }
  if (!s.current_form)
    fail(ErrorCode::no_form, name, "no form is open");
  const FormSpec* form = app_.find_form(*s.current_form);
  if (const FieldSpec* f = form->find_field(name))
    return f;
  if (action == LogAction::click && name == form->submit_name)
    return nullptr;
  fail(ErrorCode::element_not_found, name, "no element named \"" + name + "\" on form " + form_id);
  return nullptr; // unreachable
}

void Site::clear(const std::string& session_id, std::string_view locator) {
  std::lock_guard lock(mu_);
  Session& s = session_locked(session_id);
  const FieldSpec* f = resolve_field_locked(s, locator, LogAction::clear, "");
  auto mark = log_.size();
  std::string old;
  if (auto it = s.field_state.find(f->entity_name); it != s.field_state.end()) {
    old = std::move(it->second);
    s.field_state.erase(it);
  }
  append_locked(&s, LogAction::clear, *s.current_form + "." + f->entity_name, std::move(old), "", "ok");
  emit_locked(mark);
}

void Site::type(const std::string& session_id, std::string_view locator, std::string_view text) {
  std::lock_guard lock(mu_);
  Session& s = session_locked(session_id);
  const FieldSpec* f = resolve_field_locked(s, locator, LogAction::type, text);
  auto mark = log_.size();
  std::string old;
  if (auto it = s.field_state.find(f->entity_name); it != s.field_state.end())
    old = it->second;
  s.field_state[f->entity_name] = std::string(text);
  append_locked(&s, LogAction::type, *s.current_form + "." + f->entity_name, std::move(old),
                std::string(text), "ok");
  emit_locked(mark);
}

ClickResult Site::click(const std::string& session_id, std::string_view locator) {
  std::lock_guard lock(mu_);
  Session& s = session_locked(session_id);
  const FieldSpec* field = resolve_field_locked(s, locator, LogAction::click, "");
  auto mark = log_.size();
  const FormSpec* form = app_.find_form(*s.current_form);
  ClickResult result;
  if (field) {
    append_locked(&s, LogAction::click, form->form_id + "." + field->entity_name, "", "", "ok");
    emit_locked(mark);
    return result;
  }
  append_locked(&s, LogAction::click, form->form_id + "." + form->submit_name, "", "", "ok");
  result.submitted = true;
  result.outcome = form_accepts(*form, s.field_state);
  s.last_outcome = result.outcome;
  if (result.outcome.accepted) {
    Table& table = store_.tables[form->form_id];
    Row row{static_cast<std::int64_t>(table.size()) + 1, s.field_state};
    result.record_seq = row.record_seq;
    table.push_back(row);
    append_locked(&s, LogAction::submit_accepted, form->form_id, "", "",
                  "record_seq=" + std::to_string(row.record_seq));
    for (const auto& [name, value] : row.values)
      append_locked(&s, LogAction::change, form->form_id + "." + name, "", value, "");
    s.field_state.clear();
  } else {
    std::string codes;
    for (const auto& f : result.outcome.failures) {
      if (!codes.empty())
        codes += ',';
      codes += f.field + ":" + std::string(to_string(f.code));
    }
    append_locked(&s, LogAction::submit_rejected, form->form_id, "", "", codes);
  }
  emit_locked(mark);
  return result;
}

std::string Site::snapshot(const std::string& session_id) {
  std::lock_guard lock(mu_);
  Session& s = session_locked(session_id);
  const FormSpec* form = s.current_form ? app_.find_form(*s.current_form) : nullptr;
  std::string text = render_snapshot(form, s.field_state, s.last_outcome);
  auto mark = log_.size();
  append_locked(&s, LogAction::snapshot, form ? form->form_id : "", "", "", "");
  emit_locked(mark);
  return text;
}

std::optional<ClickResult> Site::submit_values(std::string_view url_path, const std::string& userid,
                                               const std::map<std::string, std::string>& values) {
  const FormSpec* form = app_.find_form_by_url(url_path);
  if (!form)
    return std::nullopt;
  auto sid = create_session(userid);
  open(sid, url_path);
  for (const auto& [name, value] : values)
    type(sid, "name=" + name, value);
  return click(sid, "name=" + form->submit_name);
}

void Site::checkpoint(const std::string& label) {
  if (label.empty())
    throw Error(ErrorCode::invalid_argument, "checkpoint label must not be empty");
  std::lock_guard lock(mu_);
  checkpoints_[label] = store_;
}

CheckpointDiff Site::diff_against(const std::string& label) const {
  std::lock_guard lock(mu_);
  auto it = checkpoints_.find(label);
  if (it == checkpoints_.end())
    throw Error(ErrorCode::unknown_label, "unknown checkpoint \"" + label + "\"");
  return diff_stores(it->second, store_);
}

RecordStore Site::checkpoint_store(const std::string& label) const {
  std::lock_guard lock(mu_);
  auto it = checkpoints_.find(label);
  if (it == checkpoints_.end())
    throw Error(ErrorCode::unknown_label, "unknown checkpoint \"" + label + "\"");
  return it->second;
}

std::vector<std::string> Site::checkpoint_labels() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (auto& [label, _] : checkpoints_)
    out.push_back(label);
  return out;
}

std::map<std::string, RecordStore> Site::checkpoints() const {
  std::lock_guard lock(mu_);
  return checkpoints_;
}

Session Site::session(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end())
    throw Error(ErrorCode::invalid_argument, "unknown session \"" + session_id + "\"");
  return it->second;
}

RecordStore Site::store() const {
  std::lock_guard lock(mu_);
  return store_;
}

std::vector<LogEntry> Site::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

void Site::append_agent_entry(const std::string& agent_id, const std::string& entity, const std::string& detail) {
  std::lock_guard lock(mu_);
  auto mark = log_.size();
  auto& e = append_locked(nullptr, LogAction::agent, entity, "", "", detail);
  e.userid = agent_id;
  emit_locked(mark);
}

void Site::set_log_sink(std::function<void(const LogEntry&)> sink) {
  std::lock_guard lock(mu_);
  sink_ = std::move(sink);
}

namespace {

void check_store_against(const AppSpec& app, const RecordStore& store) {
  for (const auto& [form_id, table] : store.tables) {
    const FormSpec* form = app.find_form(form_id);
    if (!form)
      throw Error(ErrorCode::invalid_argument, "store table \"" + form_id + "\" has no form");
    std::set<std::int64_t> seqs;
    for (const auto& row : table) {
      if (!seqs.insert(row.record_seq).second)
        throw Error(ErrorCode::invalid_argument, "duplicate record_seq in table \"" + form_id + "\"");
      for (const auto& [name, _] : row.values)
        if (!form->find_field(name))
          throw Error(ErrorCode::invalid_argument,
                      "row in \"" + form_id + "\" has unknown field \"" + name + "\"");
    }
  }
}

} // namespace

void Site::load_store(RecordStore store) {
  check_store_against(app_, store);
  for (const auto& form : app_.forms)
    store.tables[form.form_id];
  std::lock_guard lock(mu_);
  store_ = std::move(store);
}

void Site::load_checkpoints(std::map<std::string, RecordStore> checkpoints) {
  for (auto& [_, s] : checkpoints)
    check_store_against(app_, s);
  std::lock_guard lock(mu_);
  checkpoints_ = std::move(checkpoints);
}

void Site::load_log(std::vector<LogEntry> log) {
  std::lock_guard lock(mu_);
  log_ = std::move(log);
  next_log_seq_ = log_.empty() ? 1 : log_.back().seq + 1;
  // Keep new session ids distinct from the ones already in the log.
  for (const auto& e : log_) {
    if (e.session_id.size() < 2 || e.session_id[0] != 's')
      continue;
    std::int64_t n = 0;
    auto [ptr, ec] = std::from_chars(e.session_id.data() + 1, e.session_id.data() + e.session_id.size(), n);
    if (ec == std::errc() && ptr == e.session_id.data() + e.session_id.size())
      next_session_seq_ = std::max(next_session_seq_, n + 1);
  }
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

ordered_json row_json(const Row& row) {
  ordered_json j;
  j["record_seq"] = row.record_seq;
  j["values"] = ordered_json::object();
  for (auto& [k, v] : row.values)
    j["values"][k] = v;
  return j;
}

Row row_from(const json& j) {
  Row row;
  row.record_seq = j.at("record_seq").get<std::int64_t>();
  for (auto& [k, v] : j.at("values").items())
    row.values[k] = v.get<std::string>();
  return row;
}

json parse_json(std::string_view text, ErrorCode code) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(code, e.what());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text;
}

std::string table_jsonl(const Table& table) {
  std::string out;
  for (const auto& row : table)
    out += row_json(row).dump() + "\n";
  return out;
}

Table table_from_jsonl(std::string_view text) {
  Table table;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line))
    if (!line.empty())
      table.push_back(row_from_json(line));
  return table;
}

} // namespace

std::string row_to_json(const Row& row) { return row_json(row).dump(); }

Row row_from_json(std::string_view line) {
  try {
    return row_from(parse_json(line, ErrorCode::io));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, std::string("malformed row: ") + e.what());
  }
}

std::string log_entry_to_json(const LogEntry& e) {
  ordered_json j;
  j["seq"] = e.seq;
  j["timestamp_ms"] = e.timestamp_ms;
  j["session_id"] = e.session_id;
  j["userid"] = e.userid;
  j["action"] = to_string(e.action);
  j["entity"] = e.entity;
  j["old_value"] = e.old_value;
  j["new_value"] = e.new_value;
  j["detail"] = e.detail;
  return j.dump();
}

LogEntry log_entry_from_json(std::string_view line) {
  json j = parse_json(line, ErrorCode::corrupt_log);
  try {
    LogEntry e;
    e.seq = j.at("seq").get<std::int64_t>();
    e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
    e.session_id = j.at("session_id").get<std::string>();
    e.userid = j.at("userid").get<std::string>();
    auto action = parse_log_action(j.at("action").get<std::string>());
    if (!action)
      throw Error(ErrorCode::corrupt_log, "unknown log action in entry " + std::to_string(e.seq));
    e.action = *action;
    e.entity = j.at("entity").get<std::string>();
    e.old_value = j.value("old_value", "");
    e.new_value = j.value("new_value", "");
    e.detail = j.value("detail", "");
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::corrupt_log, std::string("malformed log entry: ") + ex.what());
  }
}

std::vector<LogEntry> parse_log_jsonl(std::string_view text) {
  std::vector<LogEntry> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.find_first_not_of(" \t\r") != std::string_view::npos)
      out.push_back(log_entry_from_json(line));
    pos = end + 1;
  }
  return out;
}

std::string log_to_jsonl(const std::vector<LogEntry>& entries) {
  std::string out;
  for (const auto& e : entries)
    out += log_entry_to_json(e) + "\n";
  return out;
}

std::string store_to_json(const RecordStore& store) {
  ordered_json j = ordered_json::object();
  for (const auto& [form_id, table] : store.tables) {
    j[form_id] = ordered_json::array();
    for (const auto& row : table)
      j[form_id].push_back(row_json(row));
  }
  return j.dump();
}

RecordStore store_from_json(std::string_view text) {
  json j = parse_json(text, ErrorCode::io);
  RecordStore store;
  try {
    for (auto& [form_id, rows] : j.items()) {
      Table& table = store.tables[form_id];
      for (auto& r : rows)
        table.push_back(row_from(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, std::string("malformed store: ") + e.what());
  }
  return store;
}

void save_store_dir(const RecordStore& store, const std::map<std::string, RecordStore>& checkpoints,
                    const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw Error(ErrorCode::io, "cannot create " + dir + ": " + ec.message());
  for (const auto& [form_id, table] : store.tables)
    write_file(fs::path(dir) / (form_id + ".jsonl"), table_jsonl(table));
  ordered_json cps = ordered_json::object();
  for (const auto& [label, s] : checkpoints)
    cps[label] = ordered_json::parse(store_to_json(s));
  write_file(fs::path(dir) / "checkpoints.json", cps.dump(2) + "\n");
}

RecordStore load_store_dir(const std::string& dir, std::map<std::string, RecordStore>* checkpoints) {
  if (!fs::is_directory(dir))
    throw Error(ErrorCode::io, "no store directory " + dir);
  RecordStore store;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".jsonl")
      store.tables[entry.path().stem().string()] = table_from_jsonl(read_file(entry.path()));
  }
  if (checkpoints) {
    checkpoints->clear();
    auto cp_path = fs::path(dir) / "checkpoints.json";
    if (fs::exists(cp_path)) {
      json j = parse_json(read_file(cp_path), ErrorCode::io);
      for (auto& [label, s] : j.items())
        (*checkpoints)[label] = store_from_json(s.dump());
    }
  }
  return store;
}

std::string read_text_file(const std::string& path) { return read_file(path); }
void write_text_file(const std::string& path, const std::string& text) { write_file(path, text); }

} // namespace metatest
