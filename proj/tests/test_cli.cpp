#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "acsloc/io.hpp"

using namespace acsloc;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "acsloc_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(ACSLOC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path tiny_config(const std::string& name) {
  fs::create_directories(kRoot);
  const fs::path path = kRoot / (name + ".toml");
  std::ofstream(path) << "seed = 3\nout = \"" << (kRoot / name).string() << "\"\n"
                      << R"([synth]
num_classes = 2
feature_dim = 6
train_videos = 8
test_videos = 4
t_min = 20
t_max = 30
context_min = 1
context_max = 3
[model]
hidden = 8
[train]
epochs = 3
batch_size = 4
)";
  fs::remove_all(kRoot / name);
  return path;
}

void full_chain(const fs::path& config) {
  const std::string c = "-c " + config.string();
  ASSERT_EQ(run("synth " + c), 0);
  ASSERT_EQ(run("train " + c), 0);
  ASSERT_EQ(run("infer " + c), 0);
  ASSERT_EQ(run("localize " + c), 0);
  ASSERT_EQ(run("eval " + c), 0);
}

}  // namespace

TEST(Cli, FullChainProducesArtifacts) {
  const auto config = tiny_config("chain");
  full_chain(config);
  const fs::path out = kRoot / "chain";
  for (const char* f : {"manifest.json", "checkpoint.bin", "losses.csv", "detections.jsonl", "eval_report.json",
                        "eval_report.csv", "config.resolved.toml"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_EQ(std::distance(fs::directory_iterator(out / "dump"), fs::directory_iterator{}), 4);
  const auto report = read_report(out / "eval_report.json");
  EXPECT_EQ(report.map.size(), 5u);
  EXPECT_TRUE(report.average_map.has_value());

  // Resolved config reproduces the run configuration.
  EXPECT_EQ(run("localize -c " + (out / "config.resolved.toml").string() + " --variant 0 --detections " +
                (out / "v0.jsonl").string()),
            0);
  EXPECT_TRUE(fs::exists(out / "v0.jsonl"));
}

TEST(Cli, RerunIsByteIdentical) {
  const auto a = tiny_config("rerun_a");
  const auto b = tiny_config("rerun_b");
  full_chain(a);
  full_chain(b);
  for (const char* f : {"checkpoint.bin", "losses.csv", "detections.jsonl", "eval_report.json"}) {
    EXPECT_EQ(slurp(kRoot / "rerun_a" / f), slurp(kRoot / "rerun_b" / f)) << f;
  }
}

TEST(Cli, ResumeMatchesUninterruptedRun) {
  const auto full = tiny_config("resume_full");
  const auto part = tiny_config("resume_part");
  ASSERT_EQ(run("synth -c " + full.string()), 0);
  ASSERT_EQ(run("train -c " + full.string()), 0);
  ASSERT_EQ(run("synth -c " + part.string()), 0);
  ASSERT_EQ(run("train -c " + part.string() + " --set train.epochs=1"), 0);
  ASSERT_EQ(run("train -c " + part.string() + " --resume"), 0);
  EXPECT_EQ(slurp(kRoot / "resume_full" / "checkpoint.bin"), slurp(kRoot / "resume_part" / "checkpoint.bin"));
}

TEST(Cli, EmptyDetectionsScoreZero) {
  const auto config = tiny_config("empty");
  ASSERT_EQ(run("synth -c " + config.string()), 0);
  std::ofstream(kRoot / "empty" / "none.jsonl").close();
  ASSERT_EQ(run("eval -c " + config.string() + " --detections " + (kRoot / "empty" / "none.jsonl").string()), 0);
  const auto report = read_report(kRoot / "empty" / "eval_report.json");
  EXPECT_EQ(*report.average_map, 0.0);
}

TEST(Cli, ExitCodes) {
  const auto config = tiny_config("codes");
  EXPECT_EQ(run("synth -c " + config.string() + " --set train.bogus=1"), 2);
  EXPECT_EQ(run("synth -c " + config.string() + " --set localize.variant=7"), 2);
  EXPECT_EQ(run("synth -c " + (kRoot / "missing.toml").string()), 2);
  EXPECT_EQ(run("localize -c " + config.string() + " --variant 9"), 2);
  EXPECT_EQ(run("train -c " + config.string()), 3);
  ASSERT_EQ(run("synth -c " + config.string()), 0);
  EXPECT_EQ(run("infer -c " + config.string()), 3);
  std::ofstream(kRoot / "codes" / "bad.jsonl") << "not json\n";
  EXPECT_EQ(run("eval -c " + config.string() + " --detections " + (kRoot / "codes" / "bad.jsonl").string()), 3);
}
