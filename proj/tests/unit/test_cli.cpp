#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::path(RANKCLUST_TEST_TMP) / "cli";

int run(const std::string& args) {
  fs::create_directories(kDir);
  const std::string corpus =
      args.find("--corpus") == std::string::npos ? std::string(" --corpus \"") + RANKCLUST_CORPUS + "\"" : "";
  const std::string cmd = std::string("\"") + RANKCLUST_CLI + "\" " + args + corpus + " --out \"" + kDir.string() +
                          "\" --eval-tokens 512 > \"" + (kDir / "log.txt").string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string model_path() { return (kDir / "tiny.wcx").string(); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ASSERT_EQ(run("train --model " + model_path() +
                  " --steps 5 --layers 2 --d-model 16 --heads 2 --d-ff 24 --context 32 --batch 2"),
              0)
        << slurp(kDir / "log.txt");
  }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("perturb --model " + model_path() + " --k notanumber"), 1);
  EXPECT_EQ(run("perturb --model " + model_path() + " --transform nope"), 1);
  EXPECT_EQ(run("eval"), 1);
  EXPECT_EQ(run("eval --model " + model_path() + " --format xml"), 1);
}

TEST_F(Cli, DataErrorsExitTwo) {
  EXPECT_EQ(run("eval --model " + (kDir / "missing.wcx").string()), 2);
  const fs::path bad = kDir / "bad.wcx";
  std::ofstream(bad, std::ios::binary) << "WCX2garbage";
  EXPECT_EQ(run("inspect " + bad.string()), 2);
  EXPECT_EQ(run("eval --model " + model_path() + " --corpus /nonexistent/file.txt"), 2);
}

TEST_F(Cli, EvalAndInspect) {
  EXPECT_EQ(run("eval --model " + model_path()), 0);
  EXPECT_GT(std::stod(slurp(kDir / "log.txt")), 1.0);
  EXPECT_EQ(run("inspect " + model_path()), 0);
  const auto log = slurp(kDir / "log.txt");
  EXPECT_NE(log.find("layers.1.mlp.down_proj"), std::string::npos);
  EXPECT_NE(log.find("255"), std::string::npos);
}

TEST_F(Cli, PackUnpack) {
  const auto packed = (kDir / "packed.wcx").string();
  const auto dense = (kDir / "dense.wcx").string();
  ASSERT_EQ(run("pack --model " + model_path() + " --output " + packed + " --k 8"), 0) << slurp(kDir / "log.txt");
  EXPECT_TRUE(fs::exists(kDir / "storage.csv"));
  EXPECT_LT(fs::file_size(packed), fs::file_size(model_path()));
  ASSERT_EQ(run("inspect " + packed), 0);
  EXPECT_NE(slurp(kDir / "log.txt").find("     8     0"), std::string::npos);
  ASSERT_EQ(run("unpack " + packed + " --output " + dense), 0);
  ASSERT_EQ(run("eval --model " + packed), 0);
  const double a = std::stod(slurp(kDir / "log.txt"));
  ASSERT_EQ(run("eval --model " + dense), 0);
  EXPECT_DOUBLE_EQ(std::stod(slurp(kDir / "log.txt")), a);
}

TEST_F(Cli, PerturbWritesCsv) {
  ASSERT_EQ(run("perturb --model " + model_path() + " --k 8 --seeds 2 --transform identity --transform "
                "gaussian_random --layer 1.gate"),
            0)
      << slurp(kDir / "log.txt");
  const auto csv = slurp(kDir / "perturb.csv");
  EXPECT_EQ(csv.rfind("model_id,selector,transform,correction,seed,", 0), 0u);
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  EXPECT_EQ(lines, 1u + 1u + 2u);
  ASSERT_EQ(run("perturb --model " + model_path() + " --k 8 --seeds 2 --transform identity --format json"), 0);
  EXPECT_TRUE(fs::exists(kDir / "perturb.json"));
}
