// Command-line front end. Talks to the library only through metatest.h.
#include "metatest/metatest.h"

#include "CLI11.hpp"
#include "json.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kFindings = 1;
constexpr int kSystem = 2;

struct Failure {
  mt_status status;
  std::string message;
};

void check(mt_status s) {
  if (s != MT_OK)
    throw Failure{s, mt_last_error()};
}

// Owns a library-allocated string.
struct Text {
  char* p = nullptr;
  ~Text() { mt_free(p); }
  char** out() { return &p; }
  std::string str() const { return p ? p : ""; }
};

using AppPtr = std::unique_ptr<mt_app, decltype(&mt_app_free)>;
using SitePtr = std::unique_ptr<mt_site, decltype(&mt_site_free)>;
using ServerPtr = std::unique_ptr<mt_server, decltype(&mt_server_free)>;

AppPtr load_app(const std::string& path) {
  mt_app* app = nullptr;
  check(mt_app_load(path.c_str(), &app));
  return AppPtr(app, mt_app_free);
}

SitePtr make_site(const mt_app* app, bool deterministic) {
  mt_site* site = nullptr;
  check(mt_site_create(app, deterministic, &site));
  return SitePtr(site, mt_site_free);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Failure{MT_IO, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Failure{MT_IO, "cannot write " + path.string()};
  out << text;
}

// First "<stem>-N<ext>" not yet present in dir, counting from 1.
fs::path next_free(const fs::path& dir, const std::string& stem, const std::string& ext) {
  for (int n = 1;; ++n) {
    auto p = dir / (stem + "-" + std::to_string(n) + ext);
    if (!fs::exists(p))
      return p;
  }
}

struct Global {
  std::string workspace = ".";
  bool deterministic = false;
  std::string userid;
  bool json = false;

  fs::path ws(const char* sub) const { return fs::path(workspace) / sub; }
};

void print_run(const json& run, bool as_json) {
  if (as_json) {
    std::cout << run.dump(2) << "\n";
    return;
  }
  for (const auto& s : run["steps"]) {
    std::string status = s["status"];
    std::printf("%4d  %-16s %s", s["index"].get<int>(), status.c_str(), s["directive"].get<std::string>().c_str());
    if (status != "ok" && !s["detail"].get<std::string>().empty())
      std::printf("  (%s)", s["detail"].get<std::string>().c_str());
    std::printf("\n");
  }
  std::printf("%s: %s\n", run["run_id"].get<std::string>().c_str(), run["verdict"].get<std::string>().c_str());
}

void print_diff(const json& diff, bool as_json) {
  if (as_json) {
    std::cout << diff.dump(2) << "\n";
    return;
  }
  auto name = [](const json& v) { return v.is_null() ? std::string("-") : v.get<std::string>(); };
  for (const auto& d : diff["deltas"]) {
    std::printf("%4d  %-16s %-16s %s%s\n", d["index"].get<int>(), name(d["status_a"]).c_str(),
                name(d["status_b"]).c_str(), d["directive"].get<std::string>().c_str(),
                d["snapshot_changed"].get<bool>() ? "  [snapshot differs]" : "");
  }
  std::printf("%zu differing step(s)\n", diff["deltas"].size());
}

int verdict_exit(mt_verdict v) { return v == MT_PASS ? kOk : v == MT_FAIL ? kFindings : kSystem; }

// Recorded targets look like "inprocess:<metadata>" or "wire:<address>".
std::pair<std::string, std::string> split_target(const std::string& target) {
  auto colon = target.find(':');
  if (colon == std::string::npos)
    throw Failure{MT_INVALID_ARGUMENT, "unrecognized target " + target};
  return {target.substr(0, colon), target.substr(colon + 1)};
}

void save_run_artifacts(const Global& g, mt_site* site, const std::string& run_id) {
  Text log;
  check(mt_site_log_jsonl(site, log.out()));
  write_file(g.ws("logs") / (run_id + ".jsonl"), log.str());
  check(mt_site_save_store(site, (g.ws("stores") / run_id).string().c_str()));
}

// ---------------------------------------------------------------------------

int cmd_validate(const Global& g, const std::string& metadata) {
  mt_app* raw = nullptr;
  mt_status s = mt_app_load(metadata.c_str(), &raw);
  if (s == MT_IO)
    throw Failure{s, mt_last_error()};
  if (s != MT_OK) {
    std::cerr << metadata << ": " << mt_status_name(s) << ": " << mt_last_error() << "\n";
    return kFindings;
  }
  AppPtr app(raw, mt_app_free);
  Text diags;
  size_t errors = 0;
  check(mt_app_validate(app.get(), diags.out(), &errors));
  auto j = json::parse(diags.str());
  if (g.json) {
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& d : j)
      std::printf("%s: %s: %s\n", d["severity"].get<std::string>().c_str(), d["location"].get<std::string>().c_str(),
                  d["message"].get<std::string>().c_str());
    std::printf("%s: %zu error(s)\n", metadata.c_str(), errors);
  }
  return errors ? kFindings : kOk;
}

int cmd_generate(const Global& g, const std::string& metadata, const std::string& form, std::string out_dir) {
  auto app = load_app(metadata);
  std::vector<std::string> forms;
  if (!form.empty()) {
    forms.push_back(form);
  } else {
    Text ids;
    check(mt_app_form_ids(app.get(), ids.out()));
    forms = json::parse(ids.str()).get<std::vector<std::string>>();
  }
  fs::path dir = out_dir.empty() ? g.ws("suites") : fs::path(out_dir);
  for (const auto& f : forms) {
    Text suite;
    check(mt_generate_suite(app.get(), f.c_str(), suite.out()));
    auto path = dir / (f + ".suite");
    write_file(path, suite.str());
    std::printf("%s\n", path.string().c_str());
  }
  return kOk;
}

int cmd_run(const Global& g, const std::string& suite_path, const std::vector<std::string>& target,
            std::int64_t delay_ms, const std::string& store_dir) {
  if (target.size() != 2 || (target[0] != "inprocess" && target[0] != "wire"))
    throw Failure{MT_INVALID_ARGUMENT, "--target takes `inprocess <metadata>` or `wire <address>`"};
  auto text = read_file(suite_path);
  auto suite_id = fs::path(suite_path).stem().string();
  auto runs = g.ws("runs").string();
  auto recorded = target[0] + ":" + target[1];
  mt_run_options opts{runs.c_str(), suite_id.c_str(), g.userid.empty() ? nullptr : g.userid.c_str(),
                      recorded.c_str(), g.deterministic, delay_ms};
  Text run;
  mt_verdict verdict = MT_ERROR;
  if (target[0] == "wire") {
    check(mt_run_wire(target[1].c_str(), text.c_str(), &opts, run.out(), &verdict));
    auto j = json::parse(run.str());
    print_run(j, g.json);
    return verdict_exit(verdict);
  }
  auto app = load_app(target[1]);
  auto site = make_site(app.get(), g.deterministic);
  if (!store_dir.empty())
    check(mt_site_load_store(site.get(), store_dir.c_str()));
  check(mt_run_inprocess(site.get(), text.c_str(), &opts, run.out(), &verdict));
  auto j = json::parse(run.str());
  save_run_artifacts(g, site.get(), j["run_id"]);
  print_run(j, g.json);
  return verdict_exit(verdict);
}

int cmd_replay(const Global& g, const std::string& run_id, const std::vector<std::string>& target) {
  auto runs = g.ws("runs").string();
  std::pair<std::string, std::string> t;
  if (target.empty()) {
    Text original;
    check(mt_run_load(runs.c_str(), run_id.c_str(), original.out()));
    t = split_target(json::parse(original.str())["target"].get<std::string>());
  } else if (target.size() == 2) {
    t = {target[0], target[1]};
  } else {
    throw Failure{MT_INVALID_ARGUMENT, "--target takes `inprocess <metadata>` or `wire <address>`"};
  }
  Text run, diff;
  size_t changes = 0;
  if (t.first == "wire") {
    check(mt_replay_wire(t.second.c_str(), runs.c_str(), run_id.c_str(), g.deterministic, run.out(), diff.out(),
                         &changes));
  } else if (t.first == "inprocess") {
    auto app = load_app(t.second);
    auto site = make_site(app.get(), g.deterministic);
    check(mt_replay_inprocess(site.get(), runs.c_str(), run_id.c_str(), g.deterministic, run.out(), diff.out(),
                              &changes));
    save_run_artifacts(g, site.get(), json::parse(run.str())["run_id"]);
  } else {
    throw Failure{MT_INVALID_ARGUMENT, "unrecognized target " + t.first};
  }
  auto r = json::parse(run.str());
  auto d = json::parse(diff.str());
  if (g.json) {
    std::cout << json{{"run", r}, {"diff", d}}.dump(2) << "\n";
  } else {
    print_run(r, false);
    print_diff(d, false);
  }
  return changes == 0 && r["verdict"] == "pass" ? kOk : kFindings;
}

int cmd_diff(const Global& g, const std::string& a, const std::string& b) {
  auto runs = g.ws("runs").string();
  Text diff;
  size_t changes = 0;
  check(mt_diff_runs(runs.c_str(), a.c_str(), b.c_str(), diff.out(), &changes));
  print_diff(json::parse(diff.str()), g.json);
  return changes ? kFindings : kOk;
}

std::atomic<bool> stop_requested{false};

extern "C" void on_signal(int) { stop_requested = true; }

int cmd_serve(const Global& g, const std::string& metadata, const std::string& bind, std::string store_dir) {
  auto app = load_app(metadata);
  auto site = make_site(app.get(), g.deterministic);
  if (store_dir.empty())
    store_dir = (g.ws("stores") / "serve").string();
  if (fs::exists(store_dir))
    check(mt_site_load_store(site.get(), store_dir.c_str()));
  fs::create_directories(g.ws("logs"));
  auto log_path = (g.ws("logs") / "serve.jsonl").string();
  if (fs::exists(log_path))
    check(mt_site_load_log(site.get(), read_file(log_path).c_str()));
  check(mt_site_set_log_file(site.get(), log_path.c_str()));
  mt_server* raw = nullptr;
  check(mt_server_start(site.get(), bind.c_str(), &raw));
  ServerPtr server(raw, mt_server_free);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  auto host = bind.substr(0, bind.rfind(':'));
  std::printf("listening on %s:%d\n", host.c_str(), mt_server_port(server.get()));
  std::fflush(stdout);
  while (!stop_requested)
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  mt_server_stop(server.get());
  check(mt_site_save_store(site.get(), store_dir.c_str()));
  return kOk;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty())
    std::cout << text;
  else
    write_file(out, text);
}

int cmd_logs_derive(const std::string& log, const std::string& sessions, const std::string& out) {
  Text suite;
  check(mt_logs_derive(read_file(log).c_str(), sessions.empty() ? nullptr : sessions.c_str(), suite.out()));
  emit(suite.str(), out);
  return kOk;
}

int cmd_logs_freq(const Global& g, const std::string& log) {
  Text report;
  check(mt_logs_frequency(read_file(log).c_str(), report.out()));
  auto j = json::parse(report.str());
  if (g.json) {
    std::cout << j.dump(2) << "\n";
    return kOk;
  }
  std::printf("%8s  %-12s %-9s %s\n", "count", "form", "outcome", "fields");
  for (const auto& p : j) {
    std::string fields;
    for (const auto& f : p["fields"])
      fields += (fields.empty() ? "" : ",") + f.get<std::string>();
    std::printf("%8lld  %-12s %-9s %s\n", static_cast<long long>(p["count"].get<std::int64_t>()),
                p["form_id"].get<std::string>().c_str(), p["outcome"].get<std::string>().c_str(), fields.c_str());
  }
  return kOk;
}

int cmd_logs_perf(const std::string& log, int top_k, int reps, const std::string& out) {
  Text suite;
  check(mt_logs_perf(read_file(log).c_str(), top_k, reps, suite.out()));
  emit(suite.str(), out);
  return kOk;
}

int cmd_logs_rotate(const std::string& log) {
  if (!fs::exists(log))
    throw Failure{MT_IO, "no log file " + log};
  fs::path target;
  for (int n = 1;; ++n) {
    target = log + "." + std::to_string(n);
    if (!fs::exists(target))
      break;
  }
  fs::rename(log, target);
  std::printf("%s\n", target.string().c_str());
  return kOk;
}

int cmd_logs_selftest(const Global& g, const std::string& run_id, std::string log) {
  if (log.empty())
    log = (g.ws("logs") / (run_id + ".jsonl")).string();
  Text findings;
  size_t count = 0;
  check(mt_logs_selftest(g.ws("runs").string().c_str(), run_id.c_str(), read_file(log).c_str(), findings.out(),
                         &count));
  auto j = json::parse(findings.str());
  if (g.json) {
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& f : j)
      std::printf("%s\n", f["message"].get<std::string>().c_str());
    std::printf("%zu finding(s)\n", count);
  }
  return count ? kFindings : kOk;
}

int cmd_logs_csv(const std::string& log, const std::string& out) {
  Text csv;
  check(mt_logs_csv(read_file(log).c_str(), csv.out()));
  emit(csv.str(), out);
  return kOk;
}

void print_report(const json& r) {
  for (const auto& f : r["findings"]) {
    std::string key;
    for (auto& [k, v] : f["key"].items())
      key += (key.empty() ? "" : ",") + k + "=" + v.get<std::string>();
    std::printf("%-15s %s", f["kind"].get<std::string>().c_str(), key.c_str());
    if (f["kind"] == "value_mismatch")
      std::printf("  %s: %s vs %s", f["field"].get<std::string>().c_str(), f["value_a"].dump().c_str(),
                  f["value_b"].dump().c_str());
    std::printf("\n");
  }
  std::printf("%s: %zu finding(s), %lld row(s) compared\n", r["agent_id"].get<std::string>().c_str(),
              r["findings"].size(), static_cast<long long>(r["rows_compared"].get<std::int64_t>()));
}

int cmd_agent_run(const Global& g, const std::string& spec) {
  Text report, repair;
  size_t findings = 0;
  check(mt_agent_run(spec.c_str(), g.deterministic, report.out(), &findings, repair.out()));
  auto r = json::parse(report.str());
  std::string agent_id = r["agent_id"];
  write_file(next_free(g.ws("reports"), agent_id, ".json"), report.str());
  if (repair.p) {
    auto path = g.ws("suites") / ("repair-" + agent_id + ".suite");
    write_file(path, repair.str());
    if (!g.json)
      std::printf("repair suite: %s\n", path.string().c_str());
  }
  if (g.json)
    std::cout << r.dump(2) << "\n";
  else
    print_report(r);
  return findings ? kFindings : kOk;
}

int cmd_agent_schedule(const Global& g, const std::string& spec, std::int64_t interval_ms, int iterations) {
  Text reports;
  size_t total = 0;
  check(mt_agent_schedule(spec.c_str(), g.deterministic, interval_ms, iterations, reports.out(), &total));
  auto all = json::parse(reports.str());
  for (const auto& r : all) {
    write_file(next_free(g.ws("reports"), r["agent_id"].get<std::string>(), ".json"), r.dump(2) + "\n");
    if (!g.json)
      print_report(r);
  }
  if (g.json)
    std::cout << all.dump(2) << "\n";
  return total ? kFindings : kOk;
}

int cmd_checkpoint_diff(const Global& g, const std::string& label, std::string run_id) {
  auto runs = g.ws("runs").string();
  if (run_id.empty()) {
    Text ids;
    check(mt_runs_list(runs.c_str(), ids.out()));
    auto list = json::parse(ids.str());
    if (list.empty())
      throw Failure{MT_UNKNOWN_RUN, "no runs in " + runs};
    run_id = list.back();
  }
  Text run;
  check(mt_run_load(runs.c_str(), run_id.c_str(), run.out()));
  auto [kind, where] = split_target(json::parse(run.str())["target"].get<std::string>());
  if (kind != "inprocess")
    throw Failure{MT_INVALID_ARGUMENT, run_id + " ran over the wire; its checkpoints live on the server"};
  auto app = load_app(where);
  auto site = make_site(app.get(), true);
  check(mt_site_load_store(site.get(), (g.ws("stores") / run_id).string().c_str()));
  Text diff;
  size_t changes = 0;
  check(mt_site_checkpoint_diff(site.get(), label.c_str(), diff.out(), &changes));
  auto j = json::parse(diff.str());
  if (g.json) {
    std::cout << j.dump(2) << "\n";
  } else {
    for (const char* kind_name : {"added", "removed", "changed"})
      for (const auto& c : j[kind_name])
        std::printf("%-8s %s #%lld\n", kind_name, c["form_id"].get<std::string>().c_str(),
                    static_cast<long long>(c["record_seq"].get<std::int64_t>()));
    std::printf("%zu change(s) since %s\n", changes, label.c_str());
  }
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metadata-driven form testing toolkit"};
  app.require_subcommand(1);
  Global g;
  app.add_option("-w,--workspace", g.workspace, "Workspace directory")->capture_default_str();
  app.add_flag("--deterministic", g.deterministic, "Use a counter clock instead of wall time");
  app.add_option("--userid", g.userid, "User id recorded for test sessions");
  app.add_flag("--json", g.json, "Machine-readable output");

  std::string metadata, form, out, suite, run_a, run_b, bind, store, log, sessions, label, spec, run_id;
  std::vector<std::string> target;
  std::int64_t delay_ms = 0, interval_ms = 1000;
  int top_k = 3, reps = 1, iterations = 1;

  auto* validate = app.add_subcommand("validate", "Check a metadata file");
  validate->add_option("metadata", metadata)->required();

  auto* generate = app.add_subcommand("generate", "Generate boundary-value suites");
  generate->add_option("metadata", metadata)->required();
  generate->add_option("--form", form, "Only this form");
  generate->add_option("-o,--output", out, "Output directory (default <workspace>/suites)");

  auto* run = app.add_subcommand("run", "Execute a suite");
  run->add_option("suite", suite)->required();
  run->add_option("--target", target, "inprocess <metadata> | wire <address>")->required()->expected(2);
  run->add_option("--delay-ms", delay_ms, "Pause between steps");
  run->add_option("--store", store, "Initial store directory (in-process only)");

  auto* replay = app.add_subcommand("replay", "Re-execute a stored run");
  replay->add_option("run_id", run_id)->required();
  replay->add_option("--target", target, "Override the recorded target")->expected(2);

  auto* diff = app.add_subcommand("diff", "Compare two stored runs");
  diff->add_option("run_a", run_a)->required();
  diff->add_option("run_b", run_b)->required();

  auto* serve = app.add_subcommand("serve", "Serve the reference kernel over HTTP");
  serve->add_option("metadata", metadata)->required();
  serve->add_option("--bind", bind, "host:port")->required();
  serve->add_option("--store", store, "Store directory (default <workspace>/stores/serve)");

  auto* logs = app.add_subcommand("logs", "Work with site logs");
  logs->require_subcommand(1);
  auto* derive = logs->add_subcommand("derive", "Rebuild a suite from a log");
  derive->add_option("log", log)->required();
  derive->add_option("--sessions", sessions, "Comma-separated session ids");
  derive->add_option("-o,--output", out);
  auto* freq = logs->add_subcommand("freq", "Request pattern frequencies");
  freq->add_option("log", log)->required();
  auto* perf = logs->add_subcommand("perf", "Performance suite from the most frequent patterns");
  perf->add_option("log", log)->required();
  perf->add_option("--top-k", top_k)->capture_default_str();
  perf->add_option("--reps", reps)->capture_default_str();
  perf->add_option("-o,--output", out);
  auto* rotate = logs->add_subcommand("rotate", "Move a log file aside");
  rotate->add_option("log", log)->required();
  auto* selftest = logs->add_subcommand("selftest", "Cross-check a run against its site log");
  selftest->add_option("run_id", run_id)->required();
  selftest->add_option("--log", log, "Log file (default <workspace>/logs/<run_id>.jsonl)");
  auto* csv = logs->add_subcommand("csv", "Export a log as CSV");
  csv->add_option("log", log)->required();
  csv->add_option("-o,--output", out);

  auto* agent = app.add_subcommand("agent", "Two-site consistency agents");
  agent->require_subcommand(1);
  auto* agent_run = agent->add_subcommand("run", "Run an agent once");
  agent_run->add_option("spec", spec)->required();
  auto* schedule = agent->add_subcommand("schedule", "Run an agent repeatedly");
  schedule->add_option("spec", spec)->required();
  schedule->add_option("--interval-ms", interval_ms)->capture_default_str();
  schedule->add_option("--iterations", iterations)->capture_default_str();

  auto* checkpoint = app.add_subcommand("checkpoint", "Inspect checkpoints");
  checkpoint->require_subcommand(1);
  auto* cp_diff = checkpoint->add_subcommand("diff", "Store changes since a checkpoint");
  cp_diff->add_option("label", label)->required();
  cp_diff->add_option("--run", run_id, "Run whose store to inspect (default latest)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kSystem;
  }

  try {
    if (*validate)
      return cmd_validate(g, metadata);
    if (*generate)
      return cmd_generate(g, metadata, form, out);
    if (*run)
      return cmd_run(g, suite, target, delay_ms, store);
    if (*replay)
      return cmd_replay(g, run_id, target);
    if (*diff)
      return cmd_diff(g, run_a, run_b);
    if (*serve)
      return cmd_serve(g, metadata, bind, store);
    if (*derive)
      return cmd_logs_derive(log, sessions, out);
    if (*freq)
      return cmd_logs_freq(g, log);
    if (*perf)
      return cmd_logs_perf(log, top_k, reps, out);
    if (*rotate)
      return cmd_logs_rotate(log);
    if (*selftest)
      return cmd_logs_selftest(g, run_id, log);
    if (*csv)
      return cmd_logs_csv(log, out);
    if (*agent_run)
      return cmd_agent_run(g, spec);
    if (*schedule)
      return cmd_agent_schedule(g, spec, interval_ms, iterations);
    if (*cp_diff)
      return cmd_checkpoint_diff(g, label, run_id);
  } catch (const Failure& f) {
    std::cerr << "error: " << mt_status_name(f.status) << ": " << f.message << "\n";
    return kSystem;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSystem;
  }
  std::cerr << app.help();
  return kSystem;
}
