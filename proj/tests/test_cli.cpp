#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cocoslab/cli.hpp"
#include "cocoslab/experiment.hpp"

using namespace cocoslab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("cocoslab_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir) {
  const auto p = dir / "exp.ini";
  std::ofstream(p) << "[dataset]\nnum_tuples = 30\ncaptions_per_image = 2\nnuisance_dim = 2\n"
                      "[run:a]\nloss = triplet\nepochs = 2\nbatch_n = 8\n[cocos]\nbatch_size = 4\n";
  return p;
}

std::uint64_t recorded_seed(const fs::path& metrics) {
  std::ifstream in(metrics);
  return run_record_from(read_key_values(in)).seed;
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"eval", "--data", "x"}).code, 1);  // missing --checkpoint
  EXPECT_EQ(cli({"cocos", "--checkpoint", "c", "--data", "d", "--loss", "hinge"}).code, 1);
}

TEST(Cli, HelpExitsZero) {
  const auto r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("gradcheck"), std::string::npos);
}

TEST(Cli, RuntimeErrorsExitTwo) {
  const auto r = cli({"eval", "--checkpoint", "/nonexistent/cp.txt", "--data", "/nonexistent"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
}

TEST(Cli, ReportOnEmptyDirectoryExitsOne) {
  const auto dir = scratch("empty");
  EXPECT_EQ(cli({"report", "--out", dir.string()}).code, 1);
  EXPECT_EQ(cli({"report", "--out", (dir / "missing").string()}).code, 1);
  fs::remove_all(dir);
}

TEST(Cli, GradcheckPasses) {
  const auto r = cli({"gradcheck", "--trials", "10"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, GenEvalCocosRoundTrip) {
  const auto dir = scratch("gen");
  const auto cfg = write_config(dir);
  ASSERT_EQ(cli({"gen", "--config", cfg.string(), "--out", (dir / "data").string()}).code, 0);
  ASSERT_EQ(cli({"train", "--config", cfg.string(), "--out", (dir / "run").string()}).code, 0);
  const auto cp = (dir / "run" / "checkpoint.txt").string();
  const auto e = cli({"eval", "--checkpoint", cp, "--data", (dir / "data").string(), "--split", "val"});
  EXPECT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("rsum"), std::string::npos);
  const auto c = cli({"cocos", "--checkpoint", cp, "--data", (dir / "data").string(), "--loss", "triplet",
                      "--batch-size", "4"});
  EXPECT_EQ(c.code, 0) << c.err;
  EXPECT_NE(c.out.find("c_q.mean="), std::string::npos);
  // stripping needs an identifier block
  EXPECT_EQ(cli({"eval", "--checkpoint", cp, "--data", (dir / "data").string(), "--strip-identifiers"}).code, 2);
  fs::remove_all(dir);
}

TEST(Cli, SeedPrecedence) {
  const auto dir = scratch("seed");
  const auto cfg = write_config(dir);
  ::setenv("COCOS_LAB_SEED", "7", 1);
  EXPECT_EQ(cli({"run", "--config", cfg.string(), "--out", (dir / "env").string()}).code, 0);
  EXPECT_EQ(recorded_seed(dir / "env" / "runs" / "a" / "rep0" / "metrics.txt"), 7u);
  EXPECT_EQ(cli({"run", "--config", cfg.string(), "--out", (dir / "flag").string(), "--seed", "9"}).code, 0);
  EXPECT_EQ(recorded_seed(dir / "flag" / "runs" / "a" / "rep0" / "metrics.txt"), 9u);
  ::setenv("COCOS_LAB_SEED", "seven", 1);
  EXPECT_EQ(cli({"run", "--config", cfg.string(), "--out", (dir / "bad").string()}).code, 1);
  ::unsetenv("COCOS_LAB_SEED");
  EXPECT_EQ(cli({"run", "--config", cfg.string(), "--out", (dir / "cfg").string()}).code, 0);
  EXPECT_EQ(recorded_seed(dir / "cfg" / "runs" / "a" / "rep0" / "metrics.txt"), 0u);
  const auto rep = cli({"report", "--out", (dir / "cfg").string()});
  EXPECT_EQ(rep.code, 0);
  EXPECT_NE(rep.out.find("a"), std::string::npos);
  fs::remove_all(dir);
}
