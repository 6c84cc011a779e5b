#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gtest/gtest.h"
#include "rmgen/common/error.hpp"
#include "rmgen/data/corpus.hpp"
#include "rmgen/data/generators.hpp"
#include "rmgen/numerics/ops.hpp"
#include "rmgen/training/training.hpp"

namespace rmgen::train {
namespace {

using data::PreferenceExample;
using model::RewardModel;

model::ModelConfig small_config(std::uint64_t seed = 3) {
  model::ModelConfig c = model::default_config();
  c.n_layers = 1;
  c.n_heads = 2;
  c.model_dim = 16;
  c.ff_dim = 32;
  c.context_len = 64;
  c.seed = seed;
  return c;
}

// Preferred and dispreferred differ in one frequent token.
std::vector<PreferenceExample> separable(std::size_t n, std::uint64_t seed) {
  const auto base = data::gen_arithmetic("easy", {n, 0}, seed);
  std::vector<PreferenceExample> out;
  for (const auto& e : base.examples)
    out.push_back({e.id, e.prompt, "Yes", "No", {{"split", "train"}}});
  return out;
}

TrainConfig quick(std::size_t steps = 20, std::size_t every = 5) {
  TrainConfig c;
  c.learning_rate = 1e-2;
  c.batch_size = 8;
  c.max_steps = steps;
  c.checkpoint_every = every;
  c.seed = 7;
  return c;
}

TEST(TrainConfig, Validation) {
  EXPECT_NO_THROW(lora_config().validate());
  EXPECT_DOUBLE_EQ(prompt_tuning_config().learning_rate, 0.0052);
  TrainConfig c;
  c.checkpoint_every = 30;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = {};
  c.eval_fraction = 0.5;
  EXPECT_THROW(c.validate(), ContractViolation);
  c.eval_fraction = 0.0;
  EXPECT_THROW(c.validate(), ContractViolation);
}

TEST(SelectCheckpoint, ArgminWithEarlierTies) {
  EXPECT_EQ(select_checkpoint({0.6, 0.3, 0.4, 0.5}), 1u);
  EXPECT_EQ(select_checkpoint({0.5, 0.2, 0.2, 0.9}), 1u);
  EXPECT_EQ(select_checkpoint({0.1}), 0u);
  EXPECT_THROW(select_checkpoint({}), ContractViolation);
  EXPECT_THROW(select_checkpoint({0.1, NAN}), ContractViolation);
}

TEST(Adam, MatchesHandComputedSteps) {
  num::TensorMap params{{"w", num::Tensor::vector({1.0, -2.0})}};
  Adam adam(0.1, 0.9, 0.999, 1e-8);
  adam.step(params, {{"w", num::Tensor::vector({0.5, -4.0})}});
  // After one step m_hat = g and v_hat = g^2.
  EXPECT_NEAR(params["w"][0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(params["w"][1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  adam.step(params, {{"w", num::Tensor::vector({1.0, 0.0})}});
  const double m = 0.9 * 0.05 + 0.1 * 1.0, v = 0.999 * 0.00025 + 0.001 * 1.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(params["w"][0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8) - 0.1 * mh / (std::sqrt(vh) + 1e-8),
              1e-14);
  EXPECT_EQ(adam.steps(), 2u);
}

TEST(TuneReward, StepZeroLossIsLn2WithEqualLogits) {
  RewardModel m = model::build_model(small_config());
  model::attach_lora(m, 2, {"q", "v"});
  m.params["reward_head.w"].fill(0.0);
  m.params["reward_head.b"].fill(0.0);
  const TuneResult r = tune_reward_lora(m, separable(20, 1), quick(5, 5));
  EXPECT_NEAR(r.history.front().train_loss, std::log(2.0), 1e-6);
}

TEST(TuneReward, LoraLearnsASeparableSource) {
  RewardModel m = model::build_model(small_config());
  model::attach_lora(m, 4, {"q", "k", "v", "o"});
  const auto ex = separable(50, 2);
  const TuneResult r = tune_reward_lora(m, ex, quick(40, 10));
  EXPECT_EQ(r.train_size, 45u);
  EXPECT_EQ(r.eval_size, 5u);
  EXPECT_DOUBLE_EQ(pairwise_accuracy(r.model, encode_pairs(ex)), 1.0);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
}

TEST(TuneReward, ReturnsTheEvalLossArgminCheckpoint) {
  RewardModel m = model::build_model(small_config());
  model::attach_lora(m, 2, {"v"});
  const auto ex = separable(30, 3);
  const TuneResult r = tune_reward_lora(m, ex, quick(20, 5));
  ASSERT_EQ(r.checkpoints.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r.checkpoints[i].step, 5 * (i + 1));
  std::vector<double> losses;
  for (const auto& c : r.checkpoints) losses.push_back(c.eval_loss);
  EXPECT_EQ(r.selected, select_checkpoint(losses));
  const std::vector<PreferenceExample> held(ex.end() - 3, ex.end());
  EXPECT_NEAR(pairwise_loss(r.model, encode_pairs(held)), losses[r.selected], 1e-12);
}

TEST(TuneReward, FrozenWeightsAreBitwiseUnchanged) {
  RewardModel m = model::build_model(small_config());
  model::attach_lora(m, 2, {"q", "o"});
  const TuneResult r = tune_reward_lora(m, separable(20, 4), quick(10, 5));
  for (const auto& [name, t] : m.params) {
    const bool trainable = model::is_lora_param(name) || model::is_reward_head_param(name);
    // The head bias cancels in the pairwise difference and never moves.
    if (name == "reward_head.b") continue;
    EXPECT_EQ(num::bitwise_equal(t, r.model.params.at(name)), !trainable) << name;
  }
}

TEST(TunePrompt, OnlyPromptAndHeadMove) {
  RewardModel m = model::build_model(small_config());
  model::attach_soft_prompt(m, 8, 1);
  const std::size_t d = m.config.model_dim;
  EXPECT_EQ(trainable_count(m, [](const std::string& n) {
              return n == "soft_prompt" || model::is_reward_head_param(n);
            }),
            8 * d + d + 1);
  TrainConfig c = prompt_tuning_config(5);
  c.batch_size = 8;
  c.max_steps = 10;
  c.checkpoint_every = 5;
  const TuneResult r = tune_prompt(m, separable(20, 5), c);
  for (const auto& [name, t] : m.params) {
    const bool trainable = name == "soft_prompt" || model::is_reward_head_param(name);
    // The head bias cancels in the pairwise difference and never moves.
    if (name == "reward_head.b") continue;
    EXPECT_EQ(num::bitwise_equal(t, r.model.params.at(name)), !trainable) << name;
  }
}

TEST(TuneReward, DeterministicPerSeed) {
  RewardModel m = model::build_model(small_config());
  model::attach_soft_prompt(m, 2, 1);
  const auto ex = separable(20, 6);
  TrainConfig c = quick(10, 5);
  const TuneResult a = tune_prompt(m, ex, c);
  const TuneResult b = tune_prompt(m, ex, c);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i)
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
  EXPECT_EQ(model::model_fingerprint(a.model), model::model_fingerprint(b.model));
  c.seed = 8;
  const TuneResult other = tune_prompt(m, ex, c);
  EXPECT_NE(model::model_fingerprint(a.model), model::model_fingerprint(other.model));
}

TEST(TuneReward, MirroredTrainingComplementsProbabilities) {
  RewardModel m = model::build_model(small_config());
  model::attach_lora(m, 2, {"q", "v"});
  RewardModel mirror = m;
  for (double& w : mirror.params["reward_head.w"].values()) w = -w;
  for (double& w : mirror.params["reward_head.b"].values()) w = -w;
  auto ex = separable(20, 7);
  for (std::size_t i = 0; i < ex.size(); i += 2) ex[i].preferred = "Yes Yes";
  auto swapped = ex;
  for (auto& e : swapped) std::swap(e.preferred, e.dispreferred);

  const TuneResult a = tune_reward_lora(m, ex, quick(10, 5));
  const TuneResult b = tune_reward_lora(mirror, swapped, quick(10, 5));
  ASSERT_EQ(a.selected, b.selected);
  for (const auto& p : encode_pairs(ex)) {
    const double pa = model::prefer_prob_from_logits(model::reward_logit(a.model, p.preferred),
                                                     model::reward_logit(a.model, p.dispreferred));
    const double pb = model::prefer_prob_from_logits(model::reward_logit(b.model, p.preferred),
                                                     model::reward_logit(b.model, p.dispreferred));
    EXPECT_NEAR(pa + pb, 1.0, 1e-12);
  }
}

TEST(TuneReward, RejectsEmptyInputsAndMissingAdapters) {
  RewardModel m = model::build_model(small_config());
  EXPECT_THROW(tune_reward_lora(m, separable(10, 1), quick()), ContractViolation);
  EXPECT_THROW(tune_prompt(m, separable(10, 1), quick()), ContractViolation);
  model::attach_lora(m, 2, {"q"});
  EXPECT_THROW(tune_reward_lora(m, {}, quick()), ContractViolation);
}

TEST(Metrics, CsvHasOneRowPerStep) {
  RewardModel m = model::build_model(small_config());
  model::attach_lora(m, 2, {"q"});
  const TuneResult r = tune_reward_lora(m, separable(12, 1), quick(4, 2));
  const auto path = std::filesystem::temp_directory_path() / "rmgen_metrics.csv";
  write_metrics(r.history, path.string());
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  std::filesystem::remove(path);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "step,train_loss,eval_loss");
  EXPECT_EQ(lines[1].rfind("1,", 0), 0u);
  EXPECT_EQ(lines[1].back(), ',');  // no eval loss at step 1
  EXPECT_NE(lines[2].back(), ',');
}

TEST(Tuning, CheckpointHookSeesEveryCheckpoint) {
  RewardModel m = model::build_model(small_config());
  model::attach_lora(m, 2, {"q"});
  std::vector<std::size_t> steps;
  std::vector<double> losses;
  const auto ex = separable(12, 1);
  const auto eval = encode_pairs({ex.back()});
  const TuneResult r = tune_reward_lora(m, ex, quick(6, 2),
                                        [&](std::size_t step, const RewardModel& at) {
                                          steps.push_back(step);
                                          losses.push_back(pairwise_loss(at, eval));
                                        });
  EXPECT_EQ(steps, (std::vector<std::size_t>{2, 4, 6}));
  for (std::size_t i = 0; i < losses.size(); ++i)
    EXPECT_EQ(losses[i], r.checkpoints[i].eval_loss);
}

TEST(Pretrain, FreshModelLossIsNearUniform) {
  const RewardModel m = model::build_model(model::default_config());
  const auto corpus = data::build_pretrain_corpus(1);
  std::vector<model::TokenIds> docs;
  for (std::size_t i = 0; i < 10; ++i) docs.push_back(corpus.documents[i].tokens);
  const double expected = std::log(static_cast<double>(m.config.vocab_size));
  EXPECT_NEAR(lm_loss(m, docs), expected, 0.05 * expected);
}

TEST(Pretrain, HeldOutLossDropsAndRunsAreDeterministic) {
  model::ModelConfig cfg = small_config();
  cfg.context_len = 256;
  const RewardModel m = model::build_model(cfg);
  const auto corpus = data::build_pretrain_corpus(2);
  PretrainConfig c;
  c.max_steps = 60;
  c.batch_docs = 4;
  c.seed = 3;
  const PretrainResult a = pretrain_lm(m, corpus, c);
  EXPECT_LT(a.final_heldout_loss, a.initial_heldout_loss);
  const PretrainResult b = pretrain_lm(m, corpus, c);
  EXPECT_EQ(a.train_losses, b.train_losses);
  EXPECT_EQ(model::model_fingerprint(a.model), model::model_fingerprint(b.model));
  EXPECT_TRUE(num::bitwise_equal(a.model.params.at("reward_head.w"),
                                 m.params.at("reward_head.w")));
}

TEST(Pretrain, MemorisesARepeatedSequence) {
  const RewardModel m = model::build_model(small_config());
  const auto ids = model::Vocabulary::standard().encode("What is 2+3? 5 The sky is blue.");
  model::TokenIds doc{model::Vocabulary::standard().bos()};
  doc.insert(doc.end(), ids.begin(), ids.end());
  PretrainConfig c;
  c.learning_rate = 1e-2;
  c.batch_docs = 1;
  c.max_steps = 400;
  const PretrainResult r = pretrain_lm(m, std::vector<model::TokenIds>{doc, doc}, c);
  EXPECT_LT(r.final_heldout_loss, 0.01);
}

TEST(Pretrain, DivergenceNamesTheStep) {
  RewardModel m = model::build_model(small_config());
  m.params["blocks.0.mlp.w1"][3] = NAN;
  const auto corpus = data::build_pretrain_corpus(2);
  PretrainConfig c;
  c.max_steps = 3;
  try {
    pretrain_lm(m, std::vector<model::TokenIds>{corpus.documents[0].tokens,
                                                 corpus.documents[1].tokens},
                c);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace rmgen::train
