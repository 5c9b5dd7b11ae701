#pragma once

#include "metatest/dsl.hpp"
#include "metatest/kernel.hpp"
#include "metatest/wire.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace metatest::agents {

enum class AgentAction { report_only, emit_repair_suite };

/// Either a metadata file plus a store directory (and optionally a log
/// file), or a wire address. Paths are relative to the agent spec file.
struct SiteRef {
  std::string metadata;
  std::string store;
  std::string log;
  std::string wire;

  bool is_wire() const noexcept { return !wire.empty(); }
  bool operator==(const SiteRef&) const = default;
};

struct AgentSpec {
  std::string agent_id;
  SiteRef site_a;
  SiteRef site_b;
  std::string form_id;
  std::vector<std::string> key_fields;
  std::vector<std::string> compare_fields;
  Decimal numeric_tolerance;
  AgentAction action = AgentAction::report_only;
};

AgentSpec parse_agent_spec(std::string_view json);
/// Structural checks that need no site: ids, non-empty keys, disjointness.
void check_agent_spec(const AgentSpec& spec);

enum class FindingKind { missing_in_a, missing_in_b, value_mismatch };
std::string_view to_string(FindingKind kind);

struct AgentFinding {
  FindingKind kind = FindingKind::missing_in_b;
  std::vector<std::pair<std::string, std::string>> key; // in key_fields order
  std::string field;                                    // value_mismatch only
  std::string value_a;
  std::string value_b;
  std::map<std::string, std::string> row; // the present side's values, for missing_in_*
  bool operator==(const AgentFinding&) const = default;
};

struct AgentReport {
  std::string agent_id;
  std::int64_t timestamp_ms = 0;
  std::vector<AgentFinding> findings;
  std::int64_t rows_compared = 0;
};

/// One side of a comparison.
class AgentSite {
public:
  virtual ~AgentSite() = default;
  virtual std::optional<FormSpec> form(const std::string& form_id) = 0;
  /// Consistent copy of one table.
  virtual Table snapshot(const std::string& form_id, const std::string& agent_id) = 0;
  virtual void record(const std::string& agent_id, const std::string& entity, const std::string& detail) = 0;
};

/// Checkpoints the site under "agent:<agent_id>" and reads from that copy.
class InProcessAgentSite final : public AgentSite {
public:
  explicit InProcessAgentSite(Site& site) : site_(site) {}
  std::optional<FormSpec> form(const std::string& form_id) override;
  Table snapshot(const std::string& form_id, const std::string& agent_id) override;
  void record(const std::string& agent_id, const std::string& entity, const std::string& detail) override;

private:
  Site& site_;
};

/// Reads a served site. The remote log is not written to.
class WireAgentSite final : public AgentSite {
public:
  explicit WireAgentSite(Address address) : client_(std::move(address)) {}
  std::optional<FormSpec> form(const std::string& form_id) override;
  Table snapshot(const std::string& form_id, const std::string& agent_id) override;
  void record(const std::string&, const std::string&, const std::string&) override {}

private:
  WireClient client_;
  std::map<std::string, FormSpec> forms_;
};

/// Findings are sorted by key, then kind, then compare field order.
AgentReport run_agent(const AgentSpec& spec, AgentSite& a, AgentSite& b, Clock& clock);

/// Called after each iteration except the last, before sleeping.
using BetweenIterations = std::function<void(int completed)>;

std::vector<AgentReport> run_agent_schedule(const AgentSpec& spec, AgentSite& a, AgentSite& b, Clock& clock,
                                            std::int64_t interval_ms, int iterations,
                                            const BetweenIterations& between = {});

struct RepairPlan {
  dsl::TestSuite suite;
  std::vector<std::string> notes; // one per mismatch, emitted as comments

  /// Comment lines followed by the serialized suite.
  std::string text() const;
};

/// Re-enters rows missing on B through B's form. Mismatches only get notes.
RepairPlan emit_repair_suite(const AgentReport& report, const AgentSpec& spec, const FormSpec& form_b);

std::string report_to_json(const AgentReport& report);

/// A site opened from a SiteRef, owning whatever it had to load.
class OpenedSite {
public:
  OpenedSite(const SiteRef& ref, const std::filesystem::path& base_dir, std::shared_ptr<Clock> clock);
  ~OpenedSite();

  AgentSite& agent_site() { return *agent_site_; }
  Site* site() { return site_.get(); }
  /// Writes the store (with checkpoints) and the log back, for file sites.
  void persist();

private:
  SiteRef ref_;
  std::filesystem::path base_;
  std::unique_ptr<Site> site_;
  std::unique_ptr<AgentSite> agent_site_;
};

} // namespace metatest::agents
