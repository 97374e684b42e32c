#include <gtest/gtest.h>

#include <sys/stat.h>

#include <cstdlib>
#include <sstream>

#include "gemmbench/cli.hpp"
#include "test_support.hpp"

using namespace gemmbench;
using testing_support::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gemmbench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(Cli, VerifySmallSizes) {
  const auto r = cli({"verify", "--max-n", "64"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("verify: ok"), std::string::npos);
}

TEST(Cli, RunWritesOneRowPerCell) {
  TempDir dir;
  const auto out = (dir / "r.jsonl").string();
  const auto r = cli({"run", "--sizes", "32,64", "--kernels", "naive", "--out", out});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto rows = read_results(out);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& row : rows) {
    EXPECT_TRUE(row.ok());
    EXPECT_EQ(row.kernel, "naive");
    EXPECT_EQ(row.timing->samples_ms.size(), 10u);
  }
  EXPECT_EQ(rows[0].n, 32u);
  EXPECT_EQ(rows[1].n, 64u);
}

TEST(Cli, RunFlagsReachTheRows) {
  TempDir dir;
  const auto out = (dir / "r.jsonl").string();
  const auto r = cli({"run", "--sizes", "16", "--kernels", "tiled,parallel", "--time-reps", "3", "--warmup", "0",
                      "--seed", "9", "--tile", "8", "--workers", "3", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_results(out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].tunables.tile, 8u);
  EXPECT_EQ(rows[1].tunables.workers, 3u);
  EXPECT_EQ(rows[1].tunables.seed, 9u);
  EXPECT_EQ(rows[1].tunables.warmup, 0);
  EXPECT_EQ(rows[1].timing->samples_ms.size(), 3u);
}

TEST(Cli, UnknownKernelListsValidOnes) {
  TempDir dir;
  const auto r = cli({"run", "--kernels", "nosuch", "--out", (dir / "r.jsonl").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("naive, ikj, tiled, simd, parallel"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "r.jsonl"));
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"run", "--no-such-flag"}).code, 2);
  EXPECT_EQ(cli({"run", "--sizes", "64,32"}).code, 2);
  EXPECT_EQ(cli({"run", "--energy", "psychic"}).code, 2);
  EXPECT_EQ(cli({"run", "--workers", "0"}).code, 2);
  EXPECT_EQ(cli({"run", "--time-reps", "0", "--sizes", "8"}).code, 2);
  EXPECT_EQ(cli({"report"}).code, 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(cli({"--help"}).code, 0); }

TEST(Cli, UnwritableOutputFailsBeforeMeasuring) {
  const auto r = cli({"run", "--sizes", "8", "--kernels", "naive", "--out", "/nonexistent/dir/r.jsonl"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("I/O error"), std::string::npos) << r.err;
  EXPECT_EQ(r.out.find("n=8"), std::string::npos);
}

TEST(Cli, ScopedEnergyWithoutRaplDegrades) {
  TempDir dir;
  ::setenv(kPowercapRootEnv, (dir / "absent").c_str(), 1);
  const auto out = (dir / "r.jsonl").string();
  const auto r = cli({"run", "--sizes", "8", "--kernels", "ikj", "--energy", "scoped", "--out", out});
  ::unsetenv(kPowercapRootEnv);
  EXPECT_EQ(r.code, 0) << r.err;
  const auto rows = read_results(out);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].ok());
  EXPECT_FALSE(rows[0].energy);
  EXPECT_NE(rows[0].message.find("energy unavailable"), std::string::npos);
}

TEST(Cli, ScopedEnergyFromFixtureTree) {
  TempDir dir;
  std::filesystem::create_directories(dir / "pc" / "intel-rapl:0");
  testing_support::write_text(dir / "pc" / "intel-rapl:0" / "name", "package-0\n");
  testing_support::write_text(dir / "pc" / "intel-rapl:0" / "energy_uj", "1000\n");
  testing_support::write_text(dir / "pc" / "intel-rapl:0" / "max_energy_range_uj", "1000000\n");
  ::setenv(kPowercapRootEnv, (dir / "pc").c_str(), 1);
  const auto out = (dir / "r.jsonl").string();
  const auto r = cli({"run", "--sizes", "8", "--kernels", "ikj", "--energy", "scoped", "--out", out});
  ::unsetenv(kPowercapRootEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_results(out);
  ASSERT_TRUE(rows.at(0).energy);
  EXPECT_EQ(rows[0].energy->scope, EnergyScope::scoped);
  EXPECT_EQ(rows[0].energy->reps, 20);
  EXPECT_EQ(rows[0].energy->joules, 0.0);
}

TEST(Cli, ProcessEnergyWithMissingToolDegrades) {
  TempDir dir;
  ::setenv(kPerfBinEnv, "/nonexistent/perf", 1);
  const auto out = (dir / "r.jsonl").string();
  const auto r = cli({"run", "--sizes", "8", "--kernels", "ikj", "--energy", "process", "--out", out});
  ::unsetenv(kPerfBinEnv);
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("/nonexistent/perf"), std::string::npos);
  EXPECT_FALSE(read_results(out).at(0).energy);
}

TEST(Cli, BackendCellsAndFailureExitCode) {
  TempDir dir;
  const auto out = (dir / "r.jsonl").string();
  const std::string mock = GEMMBENCH_MOCK_BACKEND;
  auto r = cli({"run", "--sizes", "16", "--kernels", "ikj", "--backend", mock + " --name mockblas", "--out", out});
  EXPECT_EQ(r.code, 0) << r.err;
  r = cli({"run", "--sizes", "16", "--kernels", "ikj", "--backend", mock + " --inject-error", "--out", out});
  EXPECT_EQ(r.code, 1);
  const auto rows = read_results(out);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1].kernel, "mockblas");
  EXPECT_TRUE(rows[1].ok());
  EXPECT_FALSE(rows[3].ok());
}

TEST(Cli, ReportTableAndPlot) {
  TempDir dir;
  const auto out = (dir / "r.jsonl").string();
  ASSERT_EQ(cli({"run", "--sizes", "16,32", "--kernels", "naive,simd", "--time-reps", "2", "--out", out}).code, 0);
  const auto svg = (dir / "p.svg").string();
  const auto r = cli({"report", "--in", out, "--baseline", "naive", "--plot", svg, "--plot-metric", "mse"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("speedup"), std::string::npos);
  EXPECT_NE(testing_support::read_text(svg).find("<svg"), std::string::npos);
  EXPECT_EQ(cli({"report", "--in", out, "--baseline", "mkl"}).code, 2);
  EXPECT_EQ(cli({"report", "--in", out, "--plot", svg, "--plot-metric", "watts"}).code, 2);
  EXPECT_EQ(cli({"report", "--in", (dir / "missing.jsonl").string()}).code, 1);
}

TEST(Cli, ListShowsRegistry) {
  const std::string mock = GEMMBENCH_MOCK_BACKEND;
  const auto r = cli({"list", "--backend", mock});
  EXPECT_EQ(r.code, 0);
  for (const char* k : {"naive", "ikj", "tiled", "simd", "parallel"}) EXPECT_NE(r.out.find(k), std::string::npos);
  EXPECT_NE(r.out.find("mock protocol=1"), std::string::npos) << r.out;
}

TEST(Cli, CellSubcommandRunsKernel) {
  EXPECT_EQ(cli({"cell", "--kernel", "tiled", "--n", "16", "--reps", "2"}).code, 0);
  EXPECT_EQ(cli({"cell", "--kernel", "nosuch", "--n", "16"}).code, 2);
}

TEST(Cli, ProcessEnergyThroughCounterTool) {
  // The real binary re-executes itself as the measured child under a fake
  // counter tool that replays a captured record set.
  TempDir dir;
  const auto tool = dir / "fake-perf";
  testing_support::write_text(tool,
                              "#!/bin/sh\n"
                              "while [ \"$#\" -gt 0 ] && [ \"$1\" != \"--\" ]; do shift; done\n"
                              "shift\n"
                              "\"$@\" || exit $?\n"
                              "cat '" GEMMBENCH_FIXTURES_DIR "/perf_stat_ram_not_supported.txt' >&2\n");
  ::chmod(tool.c_str(), 0755);
  const auto out = dir / "r.jsonl";
  const std::string cmd = "GEMMBENCH_PERF_BIN='" + tool.string() + "' '" GEMMBENCH_CLI
                          "' run --sizes 16 --kernels ikj --energy process --energy-reps 4 --out '" +
                          out.string() + "' >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const auto rows = read_results(out);
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_TRUE(rows[0].energy);
  EXPECT_EQ(rows[0].energy->scope, EnergyScope::process);
  EXPECT_EQ(rows[0].energy->reps, 4);
  EXPECT_EQ(rows[0].energy->per_domain.at("pkg"), 12.34 / 4);
  EXPECT_EQ(rows[0].energy->per_domain.count("ram"), 0u);
  EXPECT_TRUE(rows[0].energy->warning);
}
