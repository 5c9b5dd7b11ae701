#include "metatest/metatest.h"

#include "metatest/agents.hpp"
#include "metatest/dsl.hpp"
#include "metatest/error.hpp"
#include "metatest/generator.hpp"
#include "metatest/kernel.hpp"
#include "metatest/logkit.hpp"
#include "metatest/metamodel.hpp"
#include "metatest/runner.hpp"
#include "metatest/wire.hpp"

#include "json.hpp"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>

using namespace metatest;
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct mt_app {
  AppSpec spec;
};

struct mt_site {
  std::shared_ptr<Clock> clock;
  std::unique_ptr<Site> site;
  std::mutex log_mu;
  std::unique_ptr<std::ofstream> log_file;
};

struct mt_server {
  std::unique_ptr<WireServer> server;
};

namespace {

thread_local std::string last_error;

mt_status fail(mt_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <class F>
mt_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return MT_OK;
  } catch (const Error& e) {
    return fail(static_cast<mt_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(MT_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MT_INTERNAL, e.what());
  }
}

char* dup(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (!out)
    throw std::bad_alloc();
  std::memcpy(out, text.data(), text.size() + 1);
  return out;
}

void require(const void* p, const char* name) {
  if (!p)
    throw Error(ErrorCode::invalid_argument, std::string(name) + " must not be NULL");
}

std::shared_ptr<Clock> make_clock(int deterministic) {
  if (deterministic)
    return std::make_shared<CounterClock>();
  return std::make_shared<SystemClock>();
}

std::string read_file(const char* path) {
  require(path, "path");
  return read_text_file(path);
}

runner::ExecOptions exec_options(const mt_run_options* o) {
  runner::ExecOptions opts;
  opts.clock = make_clock(o->deterministic);
  opts.target = o->target ? o->target : "";
  opts.step_delay_ms = o->step_delay_ms;
  if (opts.step_delay_ms < 0)
    throw Error(ErrorCode::invalid_argument, "step delay must not be negative");
  return opts;
}

dsl::TestSuite suite_for(const char* suite_text, const mt_run_options* o) {
  require(suite_text, "suite_text");
  require(o, "options");
  require(o->runs_dir, "options->runs_dir");
  auto suite = dsl::parse_suite(suite_text, o->suite_id ? o->suite_id : "suite");
  if (o->userid && *o->userid)
    suite.userid = o->userid;
  return suite;
}

mt_verdict to_c(runner::Verdict v) {
  switch (v) {
  case runner::Verdict::pass: return MT_PASS;
  case runner::Verdict::fail: return MT_FAIL;
  case runner::Verdict::error: return MT_ERROR;
  }
  return MT_ERROR;
}

mt_status finish_run(const runner::RunRecord& run, char** run_json, mt_verdict* verdict) {
  if (run_json)
    *run_json = dup(runner::run_to_json(run));
  if (verdict)
    *verdict = to_c(run.verdict);
  return MT_OK;
}

std::vector<LogEntry> parse_log(const char* log_jsonl) {
  require(log_jsonl, "log_jsonl");
  return parse_log_jsonl(log_jsonl);
}

// Replays a stored run and reports the result through the out parameters.
template <class MakeDriver>
void replay(const char* runs_dir, const char* run_id, int deterministic, MakeDriver&& make_driver,
            char** run_json, char** diff_json, size_t* diff_changes) {
  require(runs_dir, "runs_dir");
  require(run_id, "run_id");
  runner::RunStore store(runs_dir);
  auto original = store.load(run_id);
  auto suite = dsl::parse_suite(original.suite_text, original.suite_id);
  auto driver = make_driver(suite.userid);
  runner::ExecOptions opts;
  opts.clock = make_clock(deterministic);
  auto [run, diff] = runner::replay_run(run_id, *driver, store, opts);
  if (run_json)
    *run_json = dup(runner::run_to_json(run));
  if (diff_json)
    *diff_json = dup(runner::diff_to_json(diff));
  if (diff_changes)
    *diff_changes = diff.deltas.size();
}

} // namespace

extern "C" {

const char* mt_last_error(void) { return last_error.c_str(); }

const char* mt_status_name(mt_status status) {
  if (status == MT_OK)
    return "ok";
  if (status < MT_INVALID_ARGUMENT || status > MT_INTERNAL)
    return "unknown";
  // to_string returns views of string literals.
  return to_string(static_cast<ErrorCode>(status)).data();
}

const char* mt_version(void) { return "0.1.0"; }

void mt_free(char* text) { std::free(text); }

mt_status mt_app_parse(const char* json, mt_app** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    *out = new mt_app{parse_app_spec(json)};
  });
}

mt_status mt_app_load(const char* path, mt_app** out) {
  return guarded([&] {
    require(out, "out");
    *out = new mt_app{parse_app_spec(read_file(path))};
  });
}

void mt_app_free(mt_app* app) { delete app; }

mt_status mt_app_serialize(const mt_app* app, char** out) {
  return guarded([&] {
    require(app, "app");
    require(out, "out");
    *out = dup(serialize_app_spec(app->spec));
  });
}

mt_status mt_app_validate(const mt_app* app, char** diagnostics_json, size_t* error_count) {
  return guarded([&] {
    require(app, "app");
    auto diags = validate_app_spec(app->spec);
    ordered_json j = ordered_json::array();
    size_t errors = 0;
    for (const auto& d : diags) {
      ordered_json x;
      x["severity"] = d.severity == Severity::error ? "error" : "warning";
      x["location"] = d.location;
      x["message"] = d.message;
      j.push_back(x);
      errors += d.severity == Severity::error;
    }
    if (diagnostics_json)
      *diagnostics_json = dup(j.dump(2));
    if (error_count)
      *error_count = errors;
  });
}

mt_status mt_app_form_ids(const mt_app* app, char** json_array) {
  return guarded([&] {
    require(app, "app");
    require(json_array, "json_array");
    ordered_json j = ordered_json::array();
    for (const auto& f : app->spec.forms)
      j.push_back(f.form_id);
    *json_array = dup(j.dump());
  });
}

mt_status mt_field_accepts(const mt_app* app, const char* form_id, const char* field, const char* raw,
                           char** outcome_json) {
  return guarded([&] {
    require(app, "app");
    require(form_id, "form_id");
    require(field, "field");
    require(outcome_json, "outcome_json");
    const FormSpec* form = app->spec.find_form(form_id);
    if (!form)
      throw Error(ErrorCode::invalid_argument, std::string("no form ") + form_id);
    const FieldSpec* f = form->find_field(field);
    if (!f)
      throw Error(ErrorCode::element_not_found, std::string("no field ") + form_id + "." + field);
    auto outcome = field_accepts(*f, raw ? std::optional<std::string>(raw) : std::nullopt);
    ordered_json j;
    j["accepted"] = outcome.accepted;
    j["failures"] = ordered_json::array();
    for (const auto& ff : outcome.failures)
      j["failures"].push_back({{"field", ff.field}, {"code", to_string(ff.code)}});
    *outcome_json = dup(j.dump());
  });
}

mt_status mt_generate_suite(const mt_app* app, const char* form_id, char** suite_text) {
  return guarded([&] {
    require(app, "app");
    require(form_id, "form_id");
    require(suite_text, "suite_text");
    if (has_errors(validate_app_spec(app->spec)))
      throw Error(ErrorCode::invalid_metadata, "metadata does not validate");
    const FormSpec* form = app->spec.find_form(form_id);
    if (!form)
      throw Error(ErrorCode::invalid_argument, std::string("no form ") + form_id);
    *suite_text = dup(dsl::serialize_suite(gen::generate_form_suite(*form, app->spec)));
  });
}

mt_status mt_suite_normalize(const char* suite_text, char** canonical) {
  return guarded([&] {
    require(suite_text, "suite_text");
    require(canonical, "canonical");
    auto suite = dsl::parse_suite(suite_text, "suite");
    dsl::check_labels(suite);
    *canonical = dup(dsl::serialize_suite(suite));
  });
}

mt_status mt_site_create(const mt_app* app, int deterministic, mt_site** out) {
  return guarded([&] {
    require(app, "app");
    require(out, "out");
    auto diags = validate_app_spec(app->spec);
    if (has_errors(diags))
      throw Error(ErrorCode::invalid_metadata, "metadata does not validate: " + diags.front().location + ": " +
                                                   diags.front().message);
    auto s = std::make_unique<mt_site>();
    s->clock = make_clock(deterministic);
    s->site = std::make_unique<Site>(app->spec, s->clock);
    *out = s.release();
  });
}

void mt_site_free(mt_site* site) {
  if (site && site->site)
    site->site->set_log_sink(nullptr);
  delete site;
}

mt_status mt_site_load_store(mt_site* site, const char* dir) {
  return guarded([&] {
    require(site, "site");
    require(dir, "dir");
    std::map<std::string, RecordStore> checkpoints;
    auto store = load_store_dir(dir, &checkpoints);
    site->site->load_store(std::move(store));
    site->site->load_checkpoints(std::move(checkpoints));
  });
}

mt_status mt_site_save_store(mt_site* site, const char* dir) {
  return guarded([&] {
    require(site, "site");
    require(dir, "dir");
    save_store_dir(site->site->store(), site->site->checkpoints(), dir);
  });
}

mt_status mt_site_load_log(mt_site* site, const char* log_jsonl) {
  return guarded([&] {
    require(site, "site");
    site->site->load_log(parse_log(log_jsonl));
  });
}

mt_status mt_site_log_jsonl(mt_site* site, char** out) {
  return guarded([&] {
    require(site, "site");
    require(out, "out");
    *out = dup(log_to_jsonl(site->site->log()));
  });
}

mt_status mt_site_set_log_file(mt_site* site, const char* path) {
  return guarded([&] {
    require(site, "site");
    if (!path) {
      site->site->set_log_sink(nullptr);
      std::lock_guard lock(site->log_mu);
      site->log_file.reset();
      return;
    }
    auto file = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::app);
    if (!*file)
      throw Error(ErrorCode::io, std::string("cannot open ") + path);
    {
      std::lock_guard lock(site->log_mu);
      site->log_file = std::move(file);
    }
    site->site->set_log_sink([site](const LogEntry& e) {
      std::lock_guard lock(site->log_mu);
      if (site->log_file)
        *site->log_file << log_entry_to_json(e) << '\n' << std::flush;
    });
  });
}

mt_status mt_site_checkpoint_diff(mt_site* site, const char* label, char** diff_json, size_t* changes) {
  return guarded([&] {
    require(site, "site");
    require(label, "label");
    auto diff = site->site->diff_against(label);
    auto changes_json = [](const std::vector<RowChange>& list) {
      ordered_json a = ordered_json::array();
      for (const auto& c : list) {
        ordered_json x;
        x["form_id"] = c.form_id;
        x["record_seq"] = c.record_seq;
        x["before"] = c.before ? ordered_json(c.before->values) : ordered_json(nullptr);
        x["after"] = c.after ? ordered_json(c.after->values) : ordered_json(nullptr);
        a.push_back(x);
      }
      return a;
    };
    ordered_json j;
    j["label"] = label;
    j["added"] = changes_json(diff.added);
    j["removed"] = changes_json(diff.removed);
    j["changed"] = changes_json(diff.changed);
    if (diff_json)
      *diff_json = dup(j.dump(2));
    if (changes)
      *changes = diff.added.size() + diff.removed.size() + diff.changed.size();
  });
}

mt_status mt_run_inprocess(mt_site* site, const char* suite_text, const mt_run_options* options, char** run_json,
                           mt_verdict* verdict) {
  return guarded([&] {
    require(site, "site");
    auto suite = suite_for(suite_text, options);
    runner::RunStore store(options->runs_dir);
    runner::InProcessDriver driver(*site->site, suite.userid);
    finish_run(runner::execute_suite(suite, driver, &store, exec_options(options)), run_json, verdict);
  });
}

mt_status mt_run_wire(const char* address, const char* suite_text, const mt_run_options* options, char** run_json,
                      mt_verdict* verdict) {
  return guarded([&] {
    require(address, "address");
    auto suite = suite_for(suite_text, options);
    runner::RunStore store(options->runs_dir);
    runner::WireDriver driver(Address::parse(address), suite.userid);
    auto opts = exec_options(options);
    if (opts.target.empty())
      opts.target = std::string("wire:") + address;
    finish_run(runner::execute_suite(suite, driver, &store, opts), run_json, verdict);
  });
}

mt_status mt_replay_inprocess(mt_site* site, const char* runs_dir, const char* run_id, int deterministic,
                              char** run_json, char** diff_json, size_t* diff_changes) {
  return guarded([&] {
    require(site, "site");
    replay(
        runs_dir, run_id, deterministic,
        [&](const std::string& userid) { return std::make_unique<runner::InProcessDriver>(*site->site, userid); },
        run_json, diff_json, diff_changes);
  });
}

mt_status mt_replay_wire(const char* address, const char* runs_dir, const char* run_id, int deterministic,
                         char** run_json, char** diff_json, size_t* diff_changes) {
  return guarded([&] {
    require(address, "address");
    auto addr = Address::parse(address);
    replay(
        runs_dir, run_id, deterministic,
        [&](const std::string& userid) { return std::make_unique<runner::WireDriver>(addr, userid); }, run_json,
        diff_json, diff_changes);
  });
}

mt_status mt_run_load(const char* runs_dir, const char* run_id, char** run_json) {
  return guarded([&] {
    require(runs_dir, "runs_dir");
    require(run_id, "run_id");
    require(run_json, "run_json");
    runner::RunStore store(runs_dir);
    *run_json = dup(runner::run_to_json(store.load(run_id)));
  });
}

mt_status mt_runs_list(const char* runs_dir, char** json_array) {
  return guarded([&] {
    require(runs_dir, "runs_dir");
    require(json_array, "json_array");
    runner::RunStore store(runs_dir);
    *json_array = dup(ordered_json(store.run_ids()).dump());
  });
}

mt_status mt_diff_runs(const char* runs_dir, const char* run_a, const char* run_b, char** diff_json,
                       size_t* diff_changes) {
  return guarded([&] {
    require(runs_dir, "runs_dir");
    require(run_a, "run_a");
    require(run_b, "run_b");
    runner::RunStore store(runs_dir);
    auto diff = runner::diff_runs(run_a, run_b, store);
    if (diff_json)
      *diff_json = dup(runner::diff_to_json(diff));
    if (diff_changes)
      *diff_changes = diff.deltas.size();
  });
}

mt_status mt_server_start(mt_site* site, const char* bind, mt_server** out) {
  return guarded([&] {
    require(site, "site");
    require(bind, "bind");
    require(out, "out");
    auto s = std::make_unique<mt_server>();
    s->server = std::make_unique<WireServer>(*site->site, Address::parse(bind));
    s->server->start();
    *out = s.release();
  });
}

int mt_server_port(const mt_server* server) { return server ? server->server->port() : -1; }

void mt_server_stop(mt_server* server) {
  if (server)
    server->server->stop();
}

void mt_server_free(mt_server* server) { delete server; }

mt_status mt_logs_derive(const char* log_jsonl, const char* sessions, char** suite_text) {
  return guarded([&] {
    require(suite_text, "suite_text");
    auto entries = parse_log(log_jsonl);
    std::set<std::string> filter;
    if (sessions) {
      std::stringstream ss(sessions);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty())
          filter.insert(item);
    }
    *suite_text = dup(dsl::serialize_suite(logkit::derive_suite_from_log(entries, filter)));
  });
}

mt_status mt_logs_frequency(const char* log_jsonl, char** report_json) {
  return guarded([&] {
    require(report_json, "report_json");
    auto entries = parse_log(log_jsonl);
    logkit::check_log(entries);
    *report_json = dup(logkit::report_to_json(logkit::frequency_report(entries)));
  });
}

mt_status mt_logs_perf(const char* log_jsonl, int top_k, int repetitions, char** suite_text) {
  return guarded([&] {
    require(suite_text, "suite_text");
    auto entries = parse_log(log_jsonl);
    logkit::check_log(entries);
    *suite_text = dup(dsl::serialize_suite(logkit::generate_perf_suite(entries, top_k, repetitions)));
  });
}

mt_status mt_logs_csv(const char* log_jsonl, char** csv) {
  return guarded([&] {
    require(csv, "csv");
    *csv = dup(logkit::to_csv(parse_log(log_jsonl)));
  });
}

mt_status mt_logs_selftest(const char* runs_dir, const char* run_id, const char* log_jsonl, char** findings_json,
                           size_t* count) {
  return guarded([&] {
    require(runs_dir, "runs_dir");
    require(run_id, "run_id");
    auto entries = parse_log(log_jsonl);
    runner::RunStore store(runs_dir);
    auto findings = logkit::self_test_engine(store.load(run_id), entries);
    if (findings_json)
      *findings_json = dup(logkit::findings_to_json(findings));
    if (count)
      *count = findings.size();
  });
}

mt_status mt_agent_run(const char* spec_path, int deterministic, char** report_json, size_t* findings,
                       char** repair_suite) {
  return guarded([&] {
    auto spec = agents::parse_agent_spec(read_file(spec_path));
    auto base = fs::path(spec_path).parent_path();
    auto clock = make_clock(deterministic);
    agents::OpenedSite a(spec.site_a, base, clock);
    agents::OpenedSite b(spec.site_b, base, clock);
    auto report = agents::run_agent(spec, a.agent_site(), b.agent_site(), *clock);
    a.persist();
    b.persist();
    if (report_json)
      *report_json = dup(agents::report_to_json(report));
    if (findings)
      *findings = report.findings.size();
    if (repair_suite) {
      *repair_suite = nullptr;
      if (spec.action == agents::AgentAction::emit_repair_suite) {
        auto form_b = b.agent_site().form(spec.form_id);
        *repair_suite = dup(agents::emit_repair_suite(report, spec, *form_b).text());
      }
    }
  });
}

mt_status mt_agent_schedule(const char* spec_path, int deterministic, int64_t interval_ms, int iterations,
                            char** reports_json, size_t* findings_total) {
  return guarded([&] {
    auto spec = agents::parse_agent_spec(read_file(spec_path));
    auto base = fs::path(spec_path).parent_path();
    auto clock = make_clock(deterministic);
    agents::OpenedSite a(spec.site_a, base, clock);
    agents::OpenedSite b(spec.site_b, base, clock);
    auto reports = agents::run_agent_schedule(spec, a.agent_site(), b.agent_site(), *clock, interval_ms, iterations);
    a.persist();
    b.persist();
    ordered_json j = ordered_json::array();
    size_t total = 0;
    for (const auto& r : reports) {
      j.push_back(ordered_json::parse(agents::report_to_json(r)));
      total += r.findings.size();
    }
    if (reports_json)
      *reports_json = dup(j.dump(2));
    if (findings_total)
      *findings_total = total;
  });
}

} // extern "C"
