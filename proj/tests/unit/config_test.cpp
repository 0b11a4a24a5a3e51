#include "dualcap/config.hpp"
#include "dualcap/errors.hpp"

#include "temp_dir.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <fstream>

namespace dualcap {
namespace {

using nlohmann::json;

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig c = parse_config("{}");
  EXPECT_EQ(c.pretrain.epochs, 3);
  EXPECT_EQ(c.finetune.epochs, 3);
  EXPECT_EQ(c.pretrain.clip_mix, "G");
  EXPECT_EQ(c.pretrain.sam_mix, "G+M");
  EXPECT_DOUBLE_EQ(c.pretrain.optimizer.lr, 1e-3);
  EXPECT_DOUBLE_EQ(c.finetune.optimizer.lr, 5e-4);
  EXPECT_DOUBLE_EQ(c.pretrain.optimizer.weight_decay, 0.01);
  EXPECT_EQ(c.qformer.queries, 8);
  EXPECT_EQ(c.general_encoder.rows, 16);
  EXPECT_EQ(c.general_encoder.dims, 32);
  EXPECT_EQ(c.detail_encoder.rows, 64);
  EXPECT_EQ(c.detail_encoder.dims, 48);
  EXPECT_EQ(c.decode.beam_size, 3);
  EXPECT_DOUBLE_EQ(c.decode.length_alpha, 0.7);
  EXPECT_EQ(c.prompt, "a picture of");
  EXPECT_EQ(c.corpus.medical_train, 200);
  EXPECT_EQ(c.corpus.medical_test, 50);
}

TEST(Config, ResolvedFormListsEveryDefault) {
  const json j = json::parse(dump_config(RunConfig{}));
  EXPECT_EQ(j.at("pretrain").at("loss_weights").at("itm").get<double>(), 1.0);
  EXPECT_EQ(j.at("decode").at("strategy"), "beam");
  EXPECT_EQ(j.at("metrics").at("bleu"), "corpus");
  EXPECT_EQ(j.at("encoders").at("general").at("blur_kernel"), 9);
  EXPECT_EQ(j.at("lm").at("pretrain").at("steps"), 600);
  EXPECT_EQ(j.at("ablation").at("seeds"), json::array({1, 2, 3}));
}

TEST(Config, DumpParseRoundTrip) {
  RunConfig c;
  c.seed = 42;
  c.pretrain.sam_mix = "G";
  c.decode.strategy = DecodeOptions::Strategy::kGreedy;
  c.finetune.mix = {{"medical", 2.0}, {"general", 1.0}};
  c.ablation.grid = {"MSMedCap (G, G+M)"};
  const std::string once = dump_config(c);
  EXPECT_EQ(dump_config(parse_config(once)), once);
}

TEST(Config, OverridesApply) {
  const RunConfig c = parse_config(R"({"seed": 7, "finetune": {"epochs": 5}, "qformer": {"queries": 4}})");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.finetune.epochs, 5);
  EXPECT_EQ(c.finetune.batch_size, 4);
  EXPECT_EQ(c.qformer.queries, 4);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(parse_config(R"({"sed": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"pretrain": {"epoch": 3}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"encoders": {"general": {"colour": 1}}})"), ConfigError);
}

TEST(Config, BadValuesRejected) {
  EXPECT_THROW(parse_config(R"({"pretrain": {"epochs": 0}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"pretrain": {"clip_mix": "M"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"decode": {"beam_size": 0}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"decode": {"strategy": "nucleus"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"seed": "one"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"pretrain": {"loss_weights": {"itc": 2.0}}})"), ConfigError);
  EXPECT_THROW(parse_config("[1, 2]"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
}

TEST(Config, LoadFromFile) {
  testing::TempDir dir;
  const auto path = dir.path() / "run.json";
  std::ofstream(path) << R"({"prompt": "an image of"})";
  EXPECT_EQ(load_config(path).prompt, "an image of");
  EXPECT_THROW(load_config(dir.path() / "absent.json"), ConfigError);
}

TEST(Config, DataPathResolution) {
  RunConfig c;
  EXPECT_EQ(data_path(c, "/out"), std::filesystem::path("/out/data"));
  c.data_dir = "/abs/data";
  EXPECT_EQ(data_path(c, "/out"), std::filesystem::path("/abs/data"));
}

}  // namespace
}  // namespace dualcap
