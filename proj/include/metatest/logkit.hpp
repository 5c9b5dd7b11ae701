#pragma once

#include "metatest/dsl.hpp"
#include "metatest/kernel.hpp"
#include "metatest/runner.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace metatest::logkit {

/// Throws Error(corrupt_log) naming the offending seq when the slice breaks
/// ordering or change-after-accept invariants.
void check_log(std::span<const LogEntry> entries);

/// Rebuilds the action directives (open/clear/type/click) of the selected
/// sessions, ordered by (timestamp, seq). An empty filter selects all.
dsl::TestSuite derive_suite_from_log(std::span<const LogEntry> entries,
                                     const std::set<std::string>& sessions = {});

/// The shape of one submit request: which form, how it ended, which fields
/// held values. Typed values are ignored.
struct RequestPattern {
  std::string form_id;
  bool accepted = false;
  std::set<std::string> fields;

  std::string key() const;
  bool operator==(const RequestPattern&) const = default;
};

struct PatternCount {
  RequestPattern pattern;
  std::int64_t count = 0;
};

/// Ranked by count descending, then by pattern key.
std::vector<PatternCount> frequency_report(std::span<const LogEntry> entries);

/// Earliest action sequence of each of the top_k patterns, the whole set
/// repeated `repetitions` times.
dsl::TestSuite generate_perf_suite(std::span<const LogEntry> entries, int top_k, int repetitions);

struct Finding {
  std::string kind; // "missing_step" or "missing_log_entry"
  std::string message;
  std::optional<std::int64_t> log_seq;
  std::optional<int> step_index;
};

/// Cross-checks a run's action steps against the site log it produced.
std::vector<Finding> self_test_engine(const runner::RunRecord& run, std::span<const LogEntry> site_log);

/// `seq,timestamp_ms,session_id,userid,action,entity,old_value,new_value`
std::string to_csv(std::span<const LogEntry> entries);

std::string report_to_json(const std::vector<PatternCount>& report);
std::string findings_to_json(const std::vector<Finding>& findings);

} // namespace metatest::logkit
