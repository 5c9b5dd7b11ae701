#pragma once

#include "metatest/metamodel.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace metatest {

/// Millisecond time source. Injected everywhere timestamps are produced.
class Clock {
public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() = 0;
  virtual void sleep_for(std::int64_t ms) = 0;
};

/// Deterministic counter: each reading advances by `step`; sleeping only
/// advances the counter.
class CounterClock final : public Clock {
public:
  explicit CounterClock(std::int64_t start = 1, std::int64_t step = 1) : next_(start), step_(step) {}
  std::int64_t now_ms() override;
  void sleep_for(std::int64_t ms) override;

private:
  std::mutex mu_;
  std::int64_t next_;
  std::int64_t step_;
};

class SystemClock final : public Clock {
public:
  std::int64_t now_ms() override;
  void sleep_for(std::int64_t ms) override;
};

struct Row {
  std::int64_t record_seq = 0;
  std::map<std::string, std::string> values;
  bool operator==(const Row&) const = default;
};

using Table = std::vector<Row>;

struct RecordStore {
  std::map<std::string, Table> tables; // keyed by form_id
  bool operator==(const RecordStore&) const = default;
};

enum class LogAction { open, clear, type, click, submit_accepted, submit_rejected, snapshot, change, agent };

std::string_view to_string(LogAction action);
std::optional<LogAction> parse_log_action(std::string_view text);

struct LogEntry {
  std::int64_t seq = 0;
  std::int64_t timestamp_ms = 0;
  std::string session_id;
  std::string userid;
  LogAction action = LogAction::open;
  std::string entity; // "form_id" or "form_id.field_name"
  std::string old_value;
  std::string new_value;
  std::string detail;
  bool operator==(const LogEntry&) const = default;
};

struct Session {
  std::string session_id;
  std::string userid;
  std::optional<std::string> current_form;
  std::map<std::string, std::string> field_state;
  std::optional<ValidationOutcome> last_outcome;
};

struct RowChange {
  std::string form_id;
  std::int64_t record_seq = 0;
  std::optional<Row> before;
  std::optional<Row> after;
  bool operator==(const RowChange&) const = default;
};

struct CheckpointDiff {
  std::vector<RowChange> added;
  std::vector<RowChange> removed;
  std::vector<RowChange> changed;

  bool empty() const noexcept { return added.empty() && removed.empty() && changed.empty(); }
  bool operator==(const CheckpointDiff&) const = default;
};

CheckpointDiff diff_stores(const RecordStore& before, const RecordStore& after);

struct ClickResult {
  bool submitted = false; // false for non-submit controls
  ValidationOutcome outcome;
  std::optional<std::int64_t> record_seq;
};

/// Deterministic text rendering of a session; see render_snapshot.
std::string render_snapshot(const FormSpec* form, const std::map<std::string, std::string>& field_state,
                            const std::optional<ValidationOutcome>& last_outcome);

/// Quote with the escapes shared by snapshots and suites: \" \\ \n \r \t.
std::string quote(std::string_view text);

/// The reference form engine: interprets an AppSpec, keeps sessions, a
/// record store, checkpoints and an append-only access log. All public
/// operations are serialized on an internal mutex.
class Site {
public:
  Site(AppSpec app, std::shared_ptr<Clock> clock);

  Site(const Site&) = delete;
  Site& operator=(const Site&) = delete;

  const AppSpec& app() const noexcept { return app_; }
  Clock& clock() noexcept { return *clock_; }

  std::string create_session(std::string userid);

  void open(const std::string& session_id, std::string_view url_path);
  void clear(const std::string& session_id, std::string_view locator);
  void type(const std::string& session_id, std::string_view locator, std::string_view text);
  ClickResult click(const std::string& session_id, std::string_view locator);
  std::string snapshot(const std::string& session_id);

  /// open + clear/type per value + click(submit) in one fresh session.
  /// Returns nullopt when no form lives at `url_path`.
  std::optional<ClickResult> submit_values(std::string_view url_path, const std::string& userid,
                                           const std::map<std::string, std::string>& values);

  void checkpoint(const std::string& label);
  CheckpointDiff diff_against(const std::string& label) const;
  RecordStore checkpoint_store(const std::string& label) const;
  std::vector<std::string> checkpoint_labels() const;

  Session session(const std::string& session_id) const;
  RecordStore store() const;
  std::vector<LogEntry> log() const;

  void append_agent_entry(const std::string& agent_id, const std::string& entity, const std::string& detail);

  /// Called synchronously for every appended log entry.
  void set_log_sink(std::function<void(const LogEntry&)> sink);

  /// Restores persisted state. Rows must belong to known forms.
  void load_store(RecordStore store);
  void load_checkpoints(std::map<std::string, RecordStore> checkpoints);
  void load_log(std::vector<LogEntry> log);
  std::map<std::string, RecordStore> checkpoints() const;

private:
  Session& session_locked(const std::string& session_id);
  const FieldSpec* resolve_field_locked(Session& s, std::string_view locator, LogAction action,
                                        std::string_view new_value);
  LogEntry& append_locked(const Session* s, LogAction action, std::string entity, std::string old_value,
                          std::string new_value, std::string detail);
  void emit_locked(std::size_t first);

  AppSpec app_;
  std::shared_ptr<Clock> clock_;
  mutable std::mutex mu_;
  RecordStore store_;
  std::map<std::string, RecordStore> checkpoints_;
  std::vector<LogEntry> log_;
  std::map<std::string, Session> sessions_;
  std::int64_t next_session_seq_ = 1;
  std::int64_t next_log_seq_ = 1;
  std::function<void(const LogEntry&)> sink_;
};

// Persistence: one JSON-lines file per table, one for the log.
std::string row_to_json(const Row& row);
Row row_from_json(std::string_view line);
std::string log_entry_to_json(const LogEntry& entry);
LogEntry log_entry_from_json(std::string_view line);
std::vector<LogEntry> parse_log_jsonl(std::string_view text);
std::string log_to_jsonl(const std::vector<LogEntry>& entries);
std::string store_to_json(const RecordStore& store);
RecordStore store_from_json(std::string_view text);

void save_store_dir(const RecordStore& store, const std::map<std::string, RecordStore>& checkpoints,
                    const std::string& dir);
RecordStore load_store_dir(const std::string& dir, std::map<std::string, RecordStore>* checkpoints);

/// Whole-file helpers; failures throw Error(io).
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace metatest
