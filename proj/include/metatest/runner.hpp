#pragma once

#include "metatest/dsl.hpp"
#include "metatest/kernel.hpp"
#include "metatest/wire.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace metatest::runner {

/// What a test suite needs from the system under test.
class Driver {
public:
  virtual ~Driver() = default;

  virtual void open(const std::string& url) = 0;
  virtual void clear(const Locator& locator) = 0;
  virtual void type(const Locator& locator, const std::string& text) = 0;
  virtual ClickResult click(const Locator& locator) = 0;
  virtual std::string snapshot() = 0;

  virtual bool supports_checkpoints() const = 0;
  virtual void checkpoint(const std::string& label) = 0;
  virtual CheckpointDiff diff(const std::string& label) = 0;
};

/// Drives a kernel Site directly through one session.
class InProcessDriver final : public Driver {
public:
  InProcessDriver(Site& site, std::string userid);

  void open(const std::string& url) override;
  void clear(const Locator& locator) override;
  void type(const Locator& locator, const std::string& text) override;
  ClickResult click(const Locator& locator) override;
  std::string snapshot() override;

  bool supports_checkpoints() const override { return true; }
  void checkpoint(const std::string& label) override;
  CheckpointDiff diff(const std::string& label) override;

  const std::string& session_id() const noexcept { return session_; }

private:
  Site& site_;
  std::string session_;
};

/// Speaks the kernel wire protocol. Field state is kept client side and sent
/// on submit; snapshots are rendered from the served form descriptor.
class WireDriver final : public Driver {
public:
  WireDriver(Address address, std::string userid);

  void open(const std::string& url) override;
  void clear(const Locator& locator) override;
  void type(const Locator& locator, const std::string& text) override;
  ClickResult click(const Locator& locator) override;
  std::string snapshot() override;

  bool supports_checkpoints() const override { return false; }
  void checkpoint(const std::string& label) override;
  CheckpointDiff diff(const std::string& label) override;

private:
  const FieldSpec* field_or_throw(const Locator& locator) const;

  WireClient client_;
  std::string userid_;
  std::optional<FormSpec> form_;
  std::string url_;
  std::map<std::string, std::string> field_state_;
  std::optional<ValidationOutcome> last_outcome_;
};

enum class StepStatus { ok, assertion_failed, step_error, unsupported };
enum class Verdict { pass, fail, error };

std::string_view to_string(StepStatus status);
std::string_view to_string(Verdict verdict);

struct StepResult {
  int index = 0;
  std::string directive; // canonical text
  StepStatus status = StepStatus::ok;
  std::string detail;
  std::optional<std::string> snapshot;
  std::int64_t timestamp_ms = 0;
  bool operator==(const StepResult&) const = default;
};

struct RunRecord {
  std::string run_id;
  std::string suite_id;
  std::string suite_hash;
  std::string suite_text;
  std::string target; // how to reach the system under test again
  std::int64_t started_ms = 0;
  std::vector<StepResult> steps;
  Verdict verdict = Verdict::pass;
  bool complete = true; // false when the run file has no end record
};

struct StepDelta {
  int index = 0;
  std::string directive;
  std::optional<StepStatus> status_a;
  std::optional<StepStatus> status_b;
  bool snapshot_changed = false;
};

struct RunDiff {
  std::size_t steps_a = 0;
  std::size_t steps_b = 0;
  std::vector<StepDelta> deltas;

  bool empty() const noexcept { return deltas.empty(); }
};

/// FNV-1a 64 of the suite text, as 16 hex digits.
std::string suite_hash(std::string_view suite_text);

/// Append-only run files (`<run_id>.jsonl`) plus an index (`index.jsonl`).
/// Each step is flushed before the next one executes.
class RunStore {
public:
  explicit RunStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }

  std::string begin_run(const RunRecord& header);
  void append_step(const std::string& run_id, const StepResult& step);
  void finish_run(const std::string& run_id, Verdict verdict);

  RunRecord load(const std::string& run_id) const;
  std::vector<std::string> run_ids() const;

private:
  std::filesystem::path run_path(const std::string& run_id) const;
  std::filesystem::path dir_;
};

struct ExecOptions {
  std::shared_ptr<Clock> clock;  // step timestamps; CounterClock when null
  std::string target;            // recorded for replay
  std::int64_t step_delay_ms = 0; // fixed pause between steps
};

/// Runs directives in order. Expect failures continue; step errors stop the
/// run. With a store, every step is persisted before the next executes.
RunRecord execute_suite(const dsl::TestSuite& suite, Driver& driver, RunStore* store,
                        const ExecOptions& options = {});

/// Re-executes the exact stored suite text and compares against the original.
std::pair<RunRecord, RunDiff> replay_run(const std::string& run_id, Driver& driver, RunStore& store,
                                         const ExecOptions& options = {});

/// Step-aligned comparison of statuses and snapshot bytes.
RunDiff diff_runs(const RunRecord& a, const RunRecord& b);
RunDiff diff_runs(const std::string& a, const std::string& b, const RunStore& store);

std::string run_to_json(const RunRecord& run);
std::string diff_to_json(const RunDiff& diff);

} // namespace metatest::runner
