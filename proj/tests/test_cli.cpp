#include "json.hpp"
#include "fs_support.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <sys/wait.h>

using json = nlohmann::json;
using metatest::testing::slurp;
using metatest::testing::spit;
using metatest::testing::data_path;
using metatest::testing::TempDir;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI in `ws` with stderr discarded.
Result cli(const TempDir& ws, const std::string& args) {
  std::string cmd = std::string("\"") + METATEST_CLI + "\" -w \"" + ws.str() + "\" " + args + " 2>/dev/null";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p)
    return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0)
    r.out.append(buf, n);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string md() { return data_path("variable1.json"); }

} // namespace

TEST(Cli, ValidateAndGenerate) {
  TempDir ws;
  EXPECT_EQ(cli(ws, "validate " + md()).code, 0);
  spit(ws.str("bad.json"), R"({"app_id":"x","forms":[{"form_id":"f","url_path":"/f",
    "submit_name":"go","fields":[{"entity_name":"a","data_type":"integer","min_value":5,"max_value":1}]}]})");
  EXPECT_EQ(cli(ws, "validate " + ws.str("bad.json")).code, 1);
  EXPECT_EQ(cli(ws, "validate " + ws.str("missing.json")).code, 2);
  ASSERT_EQ(cli(ws, "generate " + md()).code, 0);
  auto suite = slurp(ws.str("suites/f1.suite"));
  EXPECT_NE(suite.find("type \"name=variable1\",\"999\""), std::string::npos);
}

TEST(Cli, RunWorkedSequence) {
  TempDir ws;
  auto r = cli(ws, "--deterministic --json run " + data_path("worked_sequence.suite") + " --target inprocess " + md());
  EXPECT_EQ(r.code, 0);
  auto j = json::parse(r.out);
  EXPECT_EQ(j["verdict"], "pass");
  EXPECT_TRUE(std::filesystem::exists(ws.path() / "runs" / "run-0001.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(ws.path() / "logs" / "run-0001.jsonl"));
  EXPECT_EQ(cli(ws, "replay run-0001").code, 0);
  EXPECT_EQ(cli(ws, "logs selftest run-0001").code, 0);
}

TEST(Cli, DiffShowsTheInducedFailure) {
  TempDir ws;
  auto pass = slurp(data_path("worked_sequence.suite"));
  std::string checked = pass;
  checked.insert(checked.find("displayScreen"), "expect rejected \"name=variable1\" missing_required\n");
  spit(ws.str("checked.suite"), checked);
  EXPECT_EQ(cli(ws, "--deterministic run " + ws.str("checked.suite") + " --target inprocess " + md()).code, 0);

  auto app = json::parse(slurp(md()));
  app["forms"][0]["fields"][0]["required"] = false;
  spit(ws.str("optional.json"), app.dump());
  EXPECT_EQ(cli(ws, "--deterministic run " + ws.str("checked.suite") + " --target inprocess " + ws.str("optional.json"))
                .code,
            1);
  auto r = cli(ws, "--json diff run-0001 run-0002");
  EXPECT_EQ(r.code, 1);
  auto d = json::parse(r.out);
  ASSERT_EQ(d["deltas"].size(), 2u);
  EXPECT_EQ(d["deltas"][0]["status_b"], "assertion_failed");
  EXPECT_EQ(cli(ws, "diff run-0001 run-0001").code, 0);
}

TEST(Cli, AgentOnIdenticalSites) {
  TempDir ws;
  spit(ws.str("app.json"), slurp(md()));
  std::filesystem::create_directories(ws.path() / "a");
  std::filesystem::create_directories(ws.path() / "b");
  spit(ws.str("agent.json"), R"({"agent_id":"sync",
    "site_a":{"metadata":"app.json","store":"a"},"site_b":{"metadata":"app.json","store":"b"},
    "form_id":"f1","key_fields":["variable1"]})");
  EXPECT_EQ(cli(ws, "agent run " + ws.str("agent.json")).code, 0);
  spit(ws.str("a/f1.jsonl"), "{\"record_seq\":1,\"values\":{\"variable1\":\"5\"}}\n");
  EXPECT_EQ(cli(ws, "agent run " + ws.str("agent.json")).code, 1);
}

TEST(Cli, UsageErrors) {
  TempDir ws;
  EXPECT_EQ(cli(ws, "frobnicate").code, 2);
  EXPECT_EQ(cli(ws, "run").code, 2);
  EXPECT_EQ(cli(ws, "diff run-0001 run-0002").code, 2);
}

TEST(Cli, DeterministicRunsAreByteIdentical) {
  TempDir a, b;
  for (auto* ws : {&a, &b})
    ASSERT_EQ(cli(*ws, "--deterministic run " + data_path("worked_sequence.suite") + " --target inprocess " + md()).code,
              0);
  EXPECT_EQ(slurp(a.str("runs/run-0001.jsonl")), slurp(b.str("runs/run-0001.jsonl")));
  EXPECT_EQ(slurp(a.str("logs/run-0001.jsonl")), slurp(b.str("logs/run-0001.jsonl")));
}
