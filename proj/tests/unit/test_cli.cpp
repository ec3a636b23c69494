#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>

#include "bessom/bessom.hpp"
#include "scenarios.hpp"

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args, const std::filesystem::path& stderr_to = {}) {
  std::string cmd = std::string(BESSOM_CLI_PATH) + " " + args;
  cmd += stderr_to.empty() ? " 2>/dev/null" : " 2>'" + stderr_to.string() + "'";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run_cli("no-such-command").code, 2);
  EXPECT_EQ(run_cli("query").code, 2);
  EXPECT_EQ(run_cli("--help").code, 0);
}

TEST(Cli, SynthThenBuildRecords) {
  scen::TempDir dir("cli-build");
  const auto logs = dir.path() / "logs", store = dir.path() / "store";
  auto r = run_cli("synth --out " + q(logs) + " --date 2025-02-01 --packs 2 --cells 30 --sensors 3");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("wrote 2 files"), std::string::npos);
  r = run_cli("build-records --in " + q(logs) + " --out " + q(store));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto loaded = bessom::RecordStore::load(store);
  ASSERT_EQ(loaded.size(), 1u);
  EXPECT_EQ(loaded.entries().begin()->first.iso(), "2025-02-01");
  EXPECT_EQ(loaded.entries().begin()->second.operations.size(), 2u);
  EXPECT_EQ(loaded.packs(), 2u);
}

TEST(Cli, MissingInputFails) {
  scen::TempDir dir("cli-missing");
  EXPECT_EQ(run_cli("build-records --in " + q(dir.path() / "none") + " --out " + q(dir.path() / "s")).code, 1);
}

TEST(Cli, MockQueryIsDeterministic) {
  scen::TempDir dir("cli-query");
  scen::Gen g(101);
  scen::fixture_store(bessom::Date::parse("2024-05-01"), 5, 9, g).save(dir.path() / "store");
  auto r = run_cli("--mock kb-build --in " + q(scen::source_dir() / "corpus") + " --out " + q(dir.path() / "index"));
  ASSERT_EQ(r.code, 0);

  const std::string args = "--mock query -q 'Explain why pack spreads differ from 2024-05-01 to 2024-05-05.' --store " +
                           q(dir.path() / "store") + " --index " + q(dir.path() / "index") + " --audit";
  const auto a = run_cli(args, dir.path() / "err.txt");
  const auto b = run_cli(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.rfind("route: data_and_knowledge\n", 0), 0u);
  EXPECT_NE(a.out.find("- [Data]"), std::string::npos);
  EXPECT_NE(a.out.find("\"prompt_version\": \"v1\""), std::string::npos);
  EXPECT_NE(scen::read_file(dir.path() / "err.txt").find("timings_ms:"), std::string::npos);
}

}  // namespace
