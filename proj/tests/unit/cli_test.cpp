#include "temp_dir.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#ifdef DUALCAP_TOOL_PATH

namespace dualcap {
namespace {

namespace fs = std::filesystem;

int run_tool(const std::string& args) {
  const std::string cmd = std::string(DUALCAP_TOOL_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    config = dir.path() / "small.json";
    std::ofstream(config) << R"({"corpus": {"general_train": 12, "medical_train": 12, "medical_test": 4}})";
  }
  std::string base(const fs::path& out) const { return "--config " + config.string() + " --out " + out.string(); }

  testing::TempDir dir;
  fs::path config;
};

TEST_F(Cli, GenDataCreatesOutputAndIsRepeatable) {
  const fs::path out = dir.path() / "nested" / "run";
  ASSERT_EQ(run_tool(base(out) + " gen-data"), 0);
  EXPECT_TRUE(fs::exists(out / "data" / "general.jsonl"));
  EXPECT_TRUE(fs::exists(out / "data" / "medical.jsonl"));
  EXPECT_TRUE(fs::exists(out / "config" / "gen-data.json"));
  const std::string first = slurp(out / "data" / "medical.jsonl");
  ASSERT_EQ(run_tool(base(out) + " gen-data"), 0);
  EXPECT_EQ(slurp(out / "data" / "medical.jsonl"), first);
}

TEST_F(Cli, SeedFlagChangesCorpus) {
  ASSERT_EQ(run_tool(base(dir.path() / "a") + " --seed 1 gen-data"), 0);
  ASSERT_EQ(run_tool(base(dir.path() / "b") + " --seed 2 gen-data"), 0);
  EXPECT_NE(slurp(dir.path() / "a" / "data" / "medical.jsonl"), slurp(dir.path() / "b" / "data" / "medical.jsonl"));
  const auto snap = nlohmann::json::parse(slurp(dir.path() / "b" / "config" / "gen-data.json"));
  EXPECT_EQ(snap.at("seed"), 2);
}

TEST_F(Cli, OutputRootFromEnvironment) {
  const fs::path out = dir.path() / "from-env";
  ::setenv("DUALCAP_OUT", out.c_str(), 1);
  EXPECT_EQ(run_tool("--config " + config.string() + " gen-data"), 0);
  ::unsetenv("DUALCAP_OUT");
  EXPECT_TRUE(fs::exists(out / "data" / "medical.jsonl"));
}

TEST_F(Cli, FinetuneWithoutPretrainIsArtifactError) {
  const fs::path out = dir.path() / "run";
  ASSERT_EQ(run_tool(base(out) + " gen-data"), 0);
  EXPECT_EQ(run_tool(base(out) + " finetune"), 5);
  EXPECT_EQ(run_tool(base(out) + " generate"), 5);
  EXPECT_EQ(run_tool(base(out) + " report"), 5);
}

TEST_F(Cli, EvaluateIdentityScoresMaximum) {
  const fs::path out = dir.path() / "run";
  ASSERT_EQ(run_tool(base(out) + " gen-data"), 0);
  std::ofstream preds(dir.path() / "preds.jsonl");
  std::istringstream manifest(slurp(out / "data" / "medical.jsonl"));
  std::string line;
  std::set<std::string> seen;
  while (std::getline(manifest, line)) {
    const auto rec = nlohmann::json::parse(line);
    const std::string image = rec.at("image");
    if (!seen.insert(image).second) continue;
    preds << nlohmann::json{{"image", image}, {"prediction", rec.at("caption")}}.dump() << "\n";
  }
  preds.close();
  ASSERT_EQ(run_tool(base(out) + " evaluate --predictions " + (dir.path() / "preds.jsonl").string()), 0);
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  EXPECT_DOUBLE_EQ(report.at("scaled").at("Bleu 1").get<double>(), 1000.0);
  EXPECT_TRUE(report.at("scaled").at("BLEURT").is_null());
  EXPECT_NE(slurp(out / "report.txt").find("1000.0"), std::string::npos);
}

TEST_F(Cli, ErrorClassesMapToExitCodes) {
  const fs::path out = dir.path() / "run";
  EXPECT_EQ(run_tool("--config " + (dir.path() / "absent.json").string() + " gen-data"), 2);
  std::ofstream(dir.path() / "bad.json") << R"({"pretrain": {"epochs": 0}})";
  EXPECT_EQ(run_tool("--config " + (dir.path() / "bad.json").string() + " --out " + out.string() + " gen-data"), 2);
  EXPECT_EQ(run_tool(base(out) + " ablate --grid \"Unknown(G)\""), 2);
  EXPECT_EQ(run_tool(base(out) + " pretrain"), 5);
  ASSERT_EQ(run_tool(base(out) + " gen-data"), 0);
  std::ofstream(out / "bad_preds.jsonl") << "{not json\n";
  EXPECT_EQ(run_tool(base(out) + " evaluate --predictions " + (out / "bad_preds.jsonl").string()), 3);
  EXPECT_EQ(run_tool(base(out) + " nonsense"), 2);
  EXPECT_EQ(run_tool("--help"), 0);
}

}  // namespace
}  // namespace dualcap

#endif
