#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string output;
};

Result cli(const std::string& args) {
  std::string cmd = std::string(BISCOTTI_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return {-1, ""};
  std::array<char, 512> buf;
  while (fgets(buf.data(), int(buf.size()), p)) r.output += buf.data();
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("biscotti_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  std::string config() const { return std::string(BISCOTTI_DATA) + "/small.json"; }
  fs::path root_;
};

}  // namespace

TEST_F(CliTest, RunIsDeterministic) {
  auto a = cli("run --config " + config() + " --seed 7 --out " + (root_ / "a").string());
  auto b = cli("run --config " + config() + " --seed 7 --out " + (root_ / "b").string());
  ASSERT_EQ(a.code, 0) << a.output;
  ASSERT_EQ(b.code, 0) << b.output;
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root_ / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    auto rel = fs::relative(e.path(), root_ / "a");
    EXPECT_EQ(slurp(e.path()), slurp(root_ / "b" / rel)) << rel;
  }
  EXPECT_GE(files, 6u);
  auto csv = slurp(root_ / "a" / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "iteration,sim_time,validation_error,attack_rate,honest_stake_fraction,blocks,forks,dropped_updates");
  EXPECT_NE(slurp(root_ / "a" / "metrics.csv.meta.json").find("\"build_id\""), std::string::npos);
}

TEST_F(CliTest, VerifyChainAcceptsAndRejectsTamper) {
  auto run = cli("run --config " + config() + " --out " + (root_ / "r").string());
  ASSERT_EQ(run.code, 0) << run.output;
  auto ok = cli("verify-chain " + (root_ / "r").string());
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(ok.output.find("4 blocks verified"), std::string::npos) << ok.output;

  auto bytes = slurp(root_ / "r" / "chain.bin");
  ASSERT_GT(bytes.size(), 100u);
  // flip one byte near the end: inside the last block's body
  bytes[bytes.size() - 40] ^= 0x01;
  std::ofstream(root_ / "r" / "chain.bin", std::ios::binary) << bytes;
  auto bad = cli("verify-chain " + (root_ / "r").string());
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.output.find("block 4"), std::string::npos) << bad.output;
}

TEST_F(CliTest, BadConfigReportsField) {
  auto path = root_ / "bad.json";
  std::ofstream(path) << "{\n  \"number_of_nodes\": 12,\n  \"dataset\": {\"dimm\": 3}\n}\n";
  auto r = cli("run --config " + path.string() + " --out " + (root_ / "x").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("dataset.dimm"), std::string::npos) << r.output;
  std::ofstream(path) << "{\n  \"seed\": 1,\n  \"iterations\": oops\n}\n";
  r = cli("run --config " + path.string() + " --out " + (root_ / "x").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("line 3"), std::string::npos) << r.output;
}

TEST_F(CliTest, AnalysisSubcommands) {
  auto c = cli("collusion-prob --stake 0,0.5 --noisers 3 --trials 500");
  ASSERT_EQ(c.code, 0) << c.output;
  EXPECT_NE(c.output.find("0,3,500,0,0,"), std::string::npos) << c.output;
  auto inv = cli("invert --out " + (root_ / "inv").string() + " --batches 1,35");
  ASSERT_EQ(inv.code, 0) << inv.output;
  EXPECT_TRUE(fs::exists(root_ / "inv" / "inverted_b35.pgm"));
  EXPECT_EQ(slurp(root_ / "inv" / "inverted_b1.pgm").substr(0, 2), "P5");
  auto k = cli("krum-bench --R 10 --dim 5 --reps 3");
  EXPECT_EQ(k.code, 0) << k.output;
}
