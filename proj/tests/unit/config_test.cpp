// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <string>

#include "fixtures.hpp"
#include "macaw/config.hpp"
#include "macaw/error.hpp"

namespace macaw {
namespace {

std::string config_error(const std::string& json) {
  try {
    parse_run_config(json);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ConfigError);
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << json;
  return {};
}

TEST(Config, DefaultsMatchPublishedHyperparameters) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.train.lr_peak, 3e-5);
  EXPECT_EQ(cfg.train.warmup_ratio, 0.03);
  EXPECT_EQ(cfg.train.epochs, 5u);
  EXPECT_EQ(cfg.train.micro_batch, 4u);
  EXPECT_EQ(cfg.train.grad_accum, 3u);
  EXPECT_EQ(cfg.train.max_seq_len, 512u);
  EXPECT_EQ(cfg.model.max_seq_len, 512u);
  EXPECT_EQ(cfg.train.loss_reduction, LossReduction::Mean);
  EXPECT_EQ(cfg.model.d_model, 64u);
  EXPECT_EQ(cfg.model.layers, 2u);
  EXPECT_EQ(cfg.model.heads, 4u);
  EXPECT_EQ(cfg.model.ffn_width, 256u);
  EXPECT_EQ(cfg.model.vocab_size, 260u);
  EXPECT_EQ(cfg.model.alignment_heads, 1u);
  EXPECT_TRUE(cfg.model.tie_output);
  EXPECT_EQ(cfg.modality.video.length, 8u);
}

TEST(Config, ShippedFileEqualsDefaults) {
  const auto cfg = load_run_config(testing::default_config_path().string());
  EXPECT_EQ(to_json(cfg), to_json(RunConfig{}));
}

TEST(Config, EmptyDocumentGivesDefaults) { EXPECT_EQ(to_json(parse_run_config("{}")), to_json(RunConfig{})); }

TEST(Config, RoundTrip) {
  RunConfig cfg;
  cfg.train.lr_peak = 1.25e-3;
  cfg.train.loss_reduction = LossReduction::Sum;
  cfg.model.alignment_heads = 2;
  cfg.data.train = "train.jsonl";
  cfg.modality.audio = {30, 12, 5};
  EXPECT_EQ(to_json(parse_run_config(to_json(cfg))), to_json(cfg));
}

TEST(Config, MisspelledKeyNamed) {
  const auto msg = config_error(R"({"train": {"learnig_rate": 0.1}})");
  EXPECT_NE(msg.find("train.learnig_rate"), std::string::npos) << msg;
}

TEST(Config, UnknownSectionNamed) {
  EXPECT_NE(config_error(R"({"optimizer": {}})").find("optimizer"), std::string::npos);
}

TEST(Config, WrongTypeNamed) {
  EXPECT_NE(config_error(R"({"model": {"layers": "two"}})").find("model.layers"), std::string::npos);
  EXPECT_NE(config_error(R"({"model": {"layers": -1}})").find("model.layers"), std::string::npos);
}

TEST(Config, InvariantsChecked) {
  EXPECT_NE(config_error(R"({"model": {"d_model": 30, "heads": 4}})").find("model.heads"), std::string::npos);
  EXPECT_NE(config_error(R"({"train": {"warmup_ratio": 1.5}})").find("train.warmup_ratio"), std::string::npos);
  EXPECT_NE(config_error(R"({"train": {"learning_rate": 0}})").find("train.learning_rate"), std::string::npos);
  EXPECT_NE(config_error(R"({"modality": {"image": {"length": 3, "out_length": 4}}})").find("modality.image"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"train": {"loss_reduction": "median"}})").find("train.loss_reduction"),
            std::string::npos);
  config_error("[1, 2]");
  config_error("{not json");
}

TEST(Config, ModalityNames) {
  EXPECT_EQ(parse_modality("video"), ModalityKind::Video);
  EXPECT_EQ(modality_name(ModalityKind::Audio), "audio");
  try {
    parse_modality("smell");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownKind);
  }
}

}  // namespace
}  // namespace macaw
