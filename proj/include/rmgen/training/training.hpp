#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rmgen/data/corpus.hpp"
#include "rmgen/data/dataset.hpp"
#include "rmgen/model/reward_model.hpp"
#include "rmgen/numerics/tensor.hpp"

namespace rmgen::train {

struct TrainConfig {
  double learning_rate = 2e-4;
  std::size_t batch_size = 32;
  std::size_t max_steps = 100;
  std::size_t checkpoint_every = 25;
  double eval_fraction = 0.1;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // Throws ContractViolation.
  void validate() const;
};

TrainConfig lora_config(std::uint64_t seed = 0);
TrainConfig prompt_tuning_config(std::uint64_t seed = 0);

// Adam over a named subset of a TensorMap. Moments are created lazily per
// name.
class Adam {
 public:
  Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void step(num::TensorMap& params, const num::TensorMap& grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  num::TensorMap m_, v_;
};

// Tokenised preference pair: <bos> prompt <nl> response.
struct EncodedPair {
  model::TokenIds preferred;
  model::TokenIds dispreferred;
};
std::vector<EncodedPair> encode_pairs(const std::vector<data::PreferenceExample>& examples);

// Mean of -log sigma(r(preferred) - r(dispreferred)).
double pairwise_loss(const model::RewardModel& model, const std::vector<EncodedPair>& pairs);
// Fraction of pairs with r(preferred) > r(dispreferred).
double pairwise_accuracy(const model::RewardModel& model, const std::vector<EncodedPair>& pairs);

// Index of the smallest loss; ties go to the earlier entry. Throws
// ContractViolation on an empty list or non-finite entries.
std::size_t select_checkpoint(const std::vector<double>& eval_losses);

struct StepRecord {
  std::size_t step = 0;
  double train_loss = 0.0;  // batch loss before the update
  double eval_loss = -1.0;  // set at checkpoint steps only
  double seconds = 0.0;     // wall clock since the run started
};

struct CheckpointRecord {
  std::size_t step = 0;
  double eval_loss = 0.0;
};

struct TuneResult {
  model::RewardModel model;  // the selected checkpoint
  std::vector<StepRecord> history;
  std::vector<CheckpointRecord> checkpoints;
  std::size_t selected = 0;  // index into checkpoints
  std::size_t train_size = 0;
  std::size_t eval_size = 0;
};

// Called at every checkpoint with the model as of that step.
using CheckpointHook = std::function<void(std::size_t step, const model::RewardModel&)>;

// Pairwise reward tuning of the parameters selected by `trainable`. The last
// eval_fraction of `examples` (at least one) is held out for checkpoint
// selection and never batched. Frozen tensors are checksummed at every
// checkpoint; a change throws std::logic_error.
TuneResult tune_reward(const model::RewardModel& model,
                       const std::vector<data::PreferenceExample>& examples,
                       const TrainConfig& config,
                       const std::function<bool(const std::string&)>& trainable,
                       const CheckpointHook& on_checkpoint = {});

// Trainable set: adapters and reward head. Requires attached adapters.
TuneResult tune_reward_lora(const model::RewardModel& model,
                            const std::vector<data::PreferenceExample>& examples,
                            const TrainConfig& config, const CheckpointHook& on_checkpoint = {});
// Trainable set: soft prompt and reward head. Requires an attached soft prompt.
TuneResult tune_prompt(const model::RewardModel& model,
                       const std::vector<data::PreferenceExample>& examples,
                       const TrainConfig& config);

std::size_t trainable_count(const model::RewardModel& model,
                            const std::function<bool(const std::string&)>& trainable);

// CSV with header "step,train_loss,eval_loss"; eval_loss is empty off
// checkpoint steps. Wall clock is left out so the file is reproducible.
void write_metrics(const std::vector<StepRecord>& history, const std::string& path);

struct PretrainConfig {
  double learning_rate = 3e-3;
  std::size_t batch_docs = 8;
  std::size_t max_steps = 1000;
  double heldout_fraction = 0.05;
  double clip_norm = 1.0;  // global gradient norm; 0 disables
  std::size_t log_every = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PretrainResult {
  model::RewardModel model;
  double initial_heldout_loss = 0.0;
  double final_heldout_loss = 0.0;
  std::vector<double> train_losses;  // per step
  std::vector<StepRecord> history;   // every log_every steps and the last
};

// Mean next-token cross-entropy over documents, each weighted by its
// number of predicted tokens.
double lm_loss(const model::RewardModel& model, const std::vector<model::TokenIds>& docs);

// Next-token training on corpus documents; the last heldout_fraction of the
// documents is held out. Throws NumericError naming the step on divergence.
PretrainResult pretrain_lm(const model::RewardModel& model,
                           const std::vector<model::TokenIds>& docs,
                           const PretrainConfig& config);
PretrainResult pretrain_lm(const model::RewardModel& model, const data::Corpus& corpus,
                           const PretrainConfig& config);

}  // namespace rmgen::train
