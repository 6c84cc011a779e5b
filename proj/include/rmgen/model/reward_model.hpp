#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmgen/model/vocabulary.hpp"
#include "rmgen/numerics/grad.hpp"
#include "rmgen/numerics/tape.hpp"
#include "rmgen/numerics/tensor.hpp"

namespace rmgen::model {

using Vec = std::vector<double>;

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t context_len = 256;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t model_dim = 128;
  std::size_t ff_dim = 512;
  std::uint64_t seed = 1;

  std::size_t head_dim() const { return model_dim / n_heads; }
  void validate() const;  // throws ContractViolation
};

// Default scale over the standard vocabulary.
ModelConfig default_config();

struct LoraSpec {
  std::size_t rank = 4;
  double alpha = 8.0;
  std::vector<std::string> sites;  // subset of {"q", "k", "v", "o"}
  std::uint64_t seed = 0;
};

// Pre-norm decoder with learned positions, an LM head and a scalar reward
// head. All weights live in `params` under stable names:
//   tok_emb, pos_emb, blocks.<l>.{ln1.g, ln1.b, attn.q, attn.k, attn.v,
//   attn.o, ln2.g, ln2.b, mlp.w1, mlp.b1, mlp.w2, mlp.b2}, ln_f.g, ln_f.b,
//   lm_head, reward_head.w, reward_head.b,
//   lora.<l>.<site>.{A, B}, soft_prompt.
struct RewardModel {
  ModelConfig config;
  num::TensorMap params;
  std::optional<LoraSpec> lora;
  std::size_t soft_prompt_len = 0;
  // Human-readable seed history ("init seed=1", "pretrain seed=7", ...).
  std::vector<std::string> lineage;
};

// hidden[p][l]: residual stream after block l at requested position p.
// head_out[l][h]: attention output of head h in layer l at the last token.
struct ActivationRecord {
  std::vector<std::size_t> positions;
  std::vector<std::vector<Vec>> hidden;
  std::vector<std::vector<Vec>> head_out;
};

RewardModel build_model(const ModelConfig& config);
void reseed_reward_head(RewardModel& model, std::uint64_t seed);

// B = 0 so the adapted model initially matches the base model exactly.
void attach_lora(RewardModel& model, std::size_t rank, std::vector<std::string> sites,
                 double alpha = 8.0, std::uint64_t seed = 0);
// k learned vectors ahead of every input, initialised from token embeddings
// of random vocabulary entries.
void attach_soft_prompt(RewardModel& model, std::size_t k, std::uint64_t seed = 0);
// Same, initialised from the embeddings of `init_tokens` (k = size).
void attach_soft_prompt(RewardModel& model, const TokenIds& init_tokens);

std::size_t lora_param_count(const RewardModel& model);
bool is_lora_param(const std::string& name);
bool is_reward_head_param(const std::string& name);

// Binds every parameter of `model` as a non-owning tape leaf. Parameters for
// which `trainable` returns true receive gradients.
num::VarMap bind_params(const RewardModel& model, num::Tape& tape,
                        const std::function<bool(const std::string&)>& trainable);

struct Trace {
  num::Var final_hidden;           // [n x d] after the final layer norm
  std::vector<num::Var> residual;  // per layer, [n x d]
  std::vector<num::Var> attn;      // per layer, heads side by side, [n x d]
  std::size_t offset = 0;          // soft-prompt rows ahead of token rows
};

Trace run_forward(const RewardModel& model, num::Tape& tape, const num::VarMap& p,
                  std::span<const std::size_t> ids);
// [n x vocab] logits at token positions.
num::Var lm_head(const RewardModel& model, const num::VarMap& p, const Trace& trace);
// Scalar reward read from the last position.
num::Var reward_head(const num::VarMap& p, const Trace& trace);

struct LmOutput {
  num::Tensor logits;  // [n x vocab]
  std::optional<ActivationRecord> record;
};

LmOutput lm_logits(const RewardModel& model, std::span<const std::size_t> ids,
                   bool capture = false);
double reward_logit(const RewardModel& model, std::span<const std::size_t> ids);
double reward_logit(const RewardModel& model, std::span<const std::size_t> prompt,
                    std::span<const std::size_t> response);
// sigma(logit(prompt ++ a) - logit(prompt ++ b)).
double prefer_prob(const RewardModel& model, std::span<const std::size_t> prompt,
                   std::span<const std::size_t> a, std::span<const std::size_t> b);
double prefer_prob_from_logits(double logit_a, double logit_b);

// Empty `positions` means the last token.
ActivationRecord capture_activations(const RewardModel& model,
                                     std::span<const std::size_t> ids,
                                     std::vector<std::size_t> positions = {});

// Stable hex digest of config and parameter bytes.
std::string model_fingerprint(const RewardModel& model);

}  // namespace rmgen::model
