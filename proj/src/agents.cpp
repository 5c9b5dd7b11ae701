#include "metatest/agents.hpp"

#include "metatest/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <set>

namespace metatest::agents {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view to_string(FindingKind kind) {
  switch (kind) {
  case FindingKind::missing_in_a: return "missing_in_a";
  case FindingKind::missing_in_b: return "missing_in_b";
  case FindingKind::value_mismatch: return "value_mismatch";
  }
  return "?";
}

namespace {

SiteRef parse_site_ref(const json& j, const char* name) {
  if (!j.is_object())
    throw Error(ErrorCode::schema, std::string(name) + " must be an object");
  SiteRef ref;
  for (auto& [k, v] : j.items()) {
    if (!v.is_string())
      throw Error(ErrorCode::schema, std::string(name) + "." + k + " must be a string");
    if (k == "metadata")
      ref.metadata = v.get<std::string>();
    else if (k == "store")
      ref.store = v.get<std::string>();
    else if (k == "log")
      ref.log = v.get<std::string>();
    else if (k == "wire")
      ref.wire = v.get<std::string>();
    else
      throw Error(ErrorCode::schema, std::string("unknown key ") + name + "." + k);
  }
  if (ref.is_wire() ? !(ref.metadata.empty() && ref.store.empty() && ref.log.empty())
                    : (ref.metadata.empty() || ref.store.empty()))
    throw Error(ErrorCode::schema, std::string(name) + " needs either wire, or metadata and store");
  return ref;
}

std::vector<std::string> string_list(const json& j, const char* name) {
  if (!j.is_array())
    throw Error(ErrorCode::schema, std::string(name) + " must be an array of strings");
  std::vector<std::string> out;
  for (auto& v : j) {
    if (!v.is_string())
      throw Error(ErrorCode::schema, std::string(name) + " must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

} // namespace

AgentSpec parse_agent_spec(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::syntax, e.what());
  }
  if (!j.is_object())
    throw Error(ErrorCode::schema, "agent spec must be a JSON object");
  static const std::set<std::string> known{"agent_id",       "site_a",        "site_b",
                                           "form_id",        "key_fields",    "compare_fields",
                                           "numeric_tolerance", "action"};
  for (auto& [k, _] : j.items())
    if (!known.count(k))
      throw Error(ErrorCode::schema, "unknown key " + k);
  for (const auto& k : known)
    if (!j.contains(k) && k != "numeric_tolerance" && k != "action" && k != "compare_fields")
      throw Error(ErrorCode::schema, "missing key " + k);

  AgentSpec spec;
  try {
    spec.agent_id = j.at("agent_id").get<std::string>();
    spec.form_id = j.at("form_id").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::schema, "agent_id and form_id must be strings");
  }
  spec.site_a = parse_site_ref(j.at("site_a"), "site_a");
  spec.site_b = parse_site_ref(j.at("site_b"), "site_b");
  spec.key_fields = string_list(j.at("key_fields"), "key_fields");
  if (j.contains("compare_fields"))
    spec.compare_fields = string_list(j.at("compare_fields"), "compare_fields");
  if (j.contains("numeric_tolerance")) {
    const auto& t = j.at("numeric_tolerance");
    std::optional<Decimal> d;
    if (t.is_number())
      d = Decimal::parse_json_number(t.dump());
    else if (t.is_string())
      d = Decimal::parse_numeric(t.get<std::string>());
    if (!d)
      throw Error(ErrorCode::schema, "numeric_tolerance must be a number");
    spec.numeric_tolerance = *d;
  }
  if (j.contains("action")) {
    auto a = j.at("action").is_string() ? j.at("action").get<std::string>() : "";
    if (a == "report_only")
      spec.action = AgentAction::report_only;
    else if (a == "emit_repair_suite")
      spec.action = AgentAction::emit_repair_suite;
    else
      throw Error(ErrorCode::schema, "action must be report_only or emit_repair_suite");
  }
  check_agent_spec(spec);
  return spec;
}

void check_agent_spec(const AgentSpec& spec) {
  if (!is_identifier(spec.agent_id))
    throw Error(ErrorCode::invalid_argument, "agent_id must be an identifier");
  if (!is_identifier(spec.form_id))
    throw Error(ErrorCode::invalid_argument, "form_id must be an identifier");
  if (spec.key_fields.empty())
    throw Error(ErrorCode::invalid_argument, "key_fields must not be empty");
  if (spec.numeric_tolerance.is_negative())
    throw Error(ErrorCode::invalid_argument, "numeric_tolerance must not be negative");
  std::set<std::string> keys;
  for (const auto& k : spec.key_fields)
    if (!keys.insert(k).second)
      throw Error(ErrorCode::invalid_argument, "key field " + k + " listed twice");
  std::set<std::string> compares;
  for (const auto& c : spec.compare_fields) {
    if (keys.count(c))
      throw Error(ErrorCode::invalid_argument, "field " + c + " is both a key and a compare field");
    if (!compares.insert(c).second)
      throw Error(ErrorCode::invalid_argument, "compare field " + c + " listed twice");
  }
}

// ---------------------------------------------------------------------------

std::optional<FormSpec> InProcessAgentSite::form(const std::string& form_id) {
  const FormSpec* f = site_.app().find_form(form_id);
  return f ? std::optional<FormSpec>(*f) : std::nullopt;
}

Table InProcessAgentSite::snapshot(const std::string& form_id, const std::string& agent_id) {
  const std::string label = "agent:" + agent_id;
  site_.checkpoint(label);
  auto store = site_.checkpoint_store(label);
  auto it = store.tables.find(form_id);
  return it == store.tables.end() ? Table{} : it->second;
}

void InProcessAgentSite::record(const std::string& agent_id, const std::string& entity, const std::string& detail) {
  site_.append_agent_entry(agent_id, entity, detail);
}

std::optional<FormSpec> WireAgentSite::form(const std::string& form_id) {
  if (auto it = forms_.find(form_id); it != forms_.end())
    return it->second;
  auto f = client_.get_form_by_id(form_id);
  if (f)
    forms_[form_id] = *f;
  return f;
}

Table WireAgentSite::snapshot(const std::string& form_id, const std::string&) { return client_.rows(form_id); }

// ---------------------------------------------------------------------------

namespace {

using Key = std::vector<std::string>;

std::string value_of(const Row& row, const std::string& field) {
  auto it = row.values.find(field);
  return it == row.values.end() ? std::string() : it->second;
}

std::string key_text(const std::vector<std::string>& fields, const Key& key) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i)
      out += ',';
    out += fields[i] + "=" + key[i];
  }
  return out;
}

std::map<Key, const Row*> index_rows(const Table& table, const AgentSpec& spec, const char* site) {
  std::map<Key, const Row*> out;
  for (const auto& row : table) {
    Key key;
    for (const auto& f : spec.key_fields)
      key.push_back(value_of(row, f));
    if (!out.emplace(key, &row).second)
      throw Error(ErrorCode::ambiguous_key,
                  std::string("duplicate key ") + key_text(spec.key_fields, key) + " at " + site);
  }
  return out;
}

bool values_agree(const FieldSpec& field, const std::string& a, const std::string& b, const Decimal& tolerance) {
  if (a == b)
    return true;
  if (!field.is_number())
    return false;
  auto da = Decimal::parse_numeric(a);
  auto db = Decimal::parse_numeric(b);
  if (!da || !db)
    return false;
  return (*da - *db).abs() <= tolerance;
}

std::vector<std::pair<std::string, std::string>> key_pairs(const AgentSpec& spec, const Key& key) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < key.size(); ++i)
    out.emplace_back(spec.key_fields[i], key[i]);
  return out;
}

std::map<std::string, FieldSpec> check_metadata(const AgentSpec& spec, AgentSite& a, AgentSite& b) {
  auto fa = a.form(spec.form_id);
  auto fb = b.form(spec.form_id);
  if (!fa || !fb)
    throw Error(ErrorCode::metadata_mismatch,
                "form " + spec.form_id + " is not defined at site " + (fa ? "b" : "a"));
  std::map<std::string, FieldSpec> fields;
  auto check = [&](const std::string& name) {
    const FieldSpec* x = fa->find_field(name);
    const FieldSpec* y = fb->find_field(name);
    if (!x || !y)
      throw Error(ErrorCode::metadata_mismatch,
                  "field " + spec.form_id + "." + name + " is not defined at site " + (x ? "b" : "a"));
    if (!(*x == *y))
      throw Error(ErrorCode::metadata_mismatch, "field " + spec.form_id + "." + name + " differs between sites");
    fields[name] = *x;
  };
  for (const auto& k : spec.key_fields)
    check(k);
  for (const auto& c : spec.compare_fields)
    check(c);
  return fields;
}

std::string finding_detail(const AgentFinding& f) {
  std::string key;
  for (const auto& [k, v] : f.key)
    key += (key.empty() ? "" : ",") + k + "=" + v;
  std::string out = std::string(to_string(f.kind)) + " " + key;
  if (f.kind == FindingKind::value_mismatch)
    out += " " + f.field + ": " + quote(f.value_a) + " vs " + quote(f.value_b);
  return out;
}

} // namespace

AgentReport run_agent(const AgentSpec& spec, AgentSite& a, AgentSite& b, Clock& clock) {
  check_agent_spec(spec);
  auto fields = check_metadata(spec, a, b);

  Table rows_a = a.snapshot(spec.form_id, spec.agent_id);
  Table rows_b = b.snapshot(spec.form_id, spec.agent_id);
  auto index_a = index_rows(rows_a, spec, "site a");
  auto index_b = index_rows(rows_b, spec, "site b");

  AgentReport report;
  report.agent_id = spec.agent_id;
  report.timestamp_ms = clock.now_ms();

  // Both maps are ordered by key, so a merge walk yields sorted findings.
  auto ia = index_a.begin();
  auto ib = index_b.begin();
  while (ia != index_a.end() || ib != index_b.end()) {
    if (ib == index_b.end() || (ia != index_a.end() && ia->first < ib->first)) {
      AgentFinding f;
      f.kind = FindingKind::missing_in_b;
      f.key = key_pairs(spec, ia->first);
      f.row = ia->second->values;
      report.findings.push_back(std::move(f));
      ++ia;
    } else if (ia == index_a.end() || ib->first < ia->first) {
      AgentFinding f;
      f.kind = FindingKind::missing_in_a;
      f.key = key_pairs(spec, ib->first);
      f.row = ib->second->values;
      report.findings.push_back(std::move(f));
      ++ib;
    } else {
      ++report.rows_compared;
      for (const auto& name : spec.compare_fields) {
        auto va = value_of(*ia->second, name);
        auto vb = value_of(*ib->second, name);
        if (values_agree(fields.at(name), va, vb, spec.numeric_tolerance))
          continue;
        AgentFinding f;
        f.kind = FindingKind::value_mismatch;
        f.key = key_pairs(spec, ia->first);
        f.field = name;
        f.value_a = std::move(va);
        f.value_b = std::move(vb);
        report.findings.push_back(std::move(f));
      }
      ++ia;
      ++ib;
    }
  }

  const std::string summary =
      "findings=" + std::to_string(report.findings.size()) + " rows_compared=" + std::to_string(report.rows_compared);
  for (AgentSite* site : {&a, &b}) {
    for (const auto& f : report.findings)
      site->record(spec.agent_id, spec.form_id, finding_detail(f));
    site->record(spec.agent_id, spec.form_id, summary);
  }
  return report;
}

std::vector<AgentReport> run_agent_schedule(const AgentSpec& spec, AgentSite& a, AgentSite& b, Clock& clock,
                                            std::int64_t interval_ms, int iterations,
                                            const BetweenIterations& between) {
  if (iterations < 1)
    throw Error(ErrorCode::invalid_argument, "iterations must be >= 1");
  if (interval_ms < 0)
    throw Error(ErrorCode::invalid_argument, "interval must not be negative");
  std::vector<AgentReport> reports;
  for (int i = 0; i < iterations; ++i) {
    reports.push_back(run_agent(spec, a, b, clock));
    if (i + 1 < iterations) {
      if (between)
        between(i + 1);
      clock.sleep_for(interval_ms);
    }
  }
  return reports;
}

// ---------------------------------------------------------------------------

std::string RepairPlan::text() const {
  std::string out;
  for (const auto& n : notes)
    out += "// " + n + "\n";
  return out + dsl::serialize_suite(suite);
}

RepairPlan emit_repair_suite(const AgentReport& report, const AgentSpec& spec, const FormSpec& form_b) {
  RepairPlan plan;
  plan.suite.suite_id = "repair-" + spec.agent_id;
  plan.suite.userid = spec.agent_id;
  for (const auto& f : report.findings) {
    if (f.kind == FindingKind::value_mismatch) {
      plan.notes.push_back("manual resolution needed: " + finding_detail(f));
      continue;
    }
    if (f.kind != FindingKind::missing_in_b)
      continue;
    auto& ds = plan.suite.directives;
    ds.push_back({dsl::Open{form_b.url_path}, 0});
    for (const auto& field : form_b.fields) {
      ds.push_back({dsl::Clear{Locator::by_name(field.entity_name)}, 0});
      auto it = f.row.find(field.entity_name);
      if (it != f.row.end() && !it->second.empty())
        ds.push_back({dsl::Type{Locator::by_name(field.entity_name), it->second}, 0});
    }
    ds.push_back({dsl::Click{Locator::by_name(form_b.submit_name)}, 0});
    ds.push_back({dsl::Expect{dsl::ExpectAccepted{}}, 0});
  }
  return plan;
}

std::string report_to_json(const AgentReport& report) {
  ordered_json j;
  j["agent_id"] = report.agent_id;
  j["timestamp_ms"] = report.timestamp_ms;
  j["rows_compared"] = report.rows_compared;
  j["findings"] = ordered_json::array();
  for (const auto& f : report.findings) {
    ordered_json x;
    x["kind"] = to_string(f.kind);
    ordered_json key = ordered_json::object();
    for (const auto& [k, v] : f.key)
      key[k] = v;
    x["key"] = key;
    if (f.kind == FindingKind::value_mismatch) {
      x["field"] = f.field;
      x["value_a"] = f.value_a;
      x["value_b"] = f.value_b;
    } else {
      x["row"] = f.row;
    }
    j["findings"].push_back(x);
  }
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

OpenedSite::OpenedSite(const SiteRef& ref, const fs::path& base_dir, std::shared_ptr<Clock> clock)
    : ref_(ref), base_(base_dir) {
  if (ref.is_wire()) {
    agent_site_ = std::make_unique<WireAgentSite>(Address::parse(ref.wire));
    return;
  }
  auto app = parse_app_spec(read_text_file((base_ / ref.metadata).string()));
  if (has_errors(validate_app_spec(app)))
    throw Error(ErrorCode::invalid_metadata, "metadata " + ref.metadata + " does not validate");
  site_ = std::make_unique<Site>(std::move(app), std::move(clock));
  auto store_dir = base_ / ref.store;
  if (fs::exists(store_dir)) {
    std::map<std::string, RecordStore> checkpoints;
    site_->load_store(load_store_dir(store_dir.string(), &checkpoints));
    site_->load_checkpoints(std::move(checkpoints));
  }
  if (!ref.log.empty() && fs::exists(base_ / ref.log))
    site_->load_log(parse_log_jsonl(read_text_file((base_ / ref.log).string())));
  agent_site_ = std::make_unique<InProcessAgentSite>(*site_);
}

OpenedSite::~OpenedSite() = default;

void OpenedSite::persist() {
  if (!site_)
    return;
  save_store_dir(site_->store(), site_->checkpoints(), (base_ / ref_.store).string());
  if (!ref_.log.empty())
    write_text_file((base_ / ref_.log).string(), log_to_jsonl(site_->log()));
}

} // namespace metatest::agents
