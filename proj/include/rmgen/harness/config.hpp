#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rmgen/data/generators.hpp"
#include "rmgen/model/reward_model.hpp"

namespace rmgen::harness {

// Every intervention id in matrix order.
const std::vector<std::string>& all_interventions();

struct ExperimentConfig {
  // Pretrained model checkpoint. When empty, a model is built from `model`
  // and pretrained for `pretrain_steps` steps on the synthetic corpus.
  std::string checkpoint;
  model::ModelConfig model = model::default_config();
  std::size_t pretrain_steps = 1000;
  std::size_t corpus_tokens = 100000;

  // Dataset registry file; when empty, the default registry for `seed`.
  std::string registry;
  std::vector<std::string> shifts;  // empty: every registry shift
  std::vector<std::string> interventions = all_interventions();
  std::vector<std::string> ttc_candidates;  // empty: the full catalog
  std::uint64_t seed = 0;
  std::string output_dir = "rmgen_out";
  std::size_t threads = 1;

  data::SplitSizes sizes;
  std::size_t ttc_budget = 650;
  std::size_t tune_steps = 100;
  std::size_t checkpoint_every = 25;
  std::size_t batch_size = 32;
  std::size_t lora_rank = 8;
  std::size_t soft_prompt_tokens = 8;
  std::size_t few_shots = 5;
  std::size_t ccs_restarts = 10;
  std::size_t ccs_iterations = 1000;
  // Target examples re-evaluated in shuffled order to check isolation.
  std::size_t isolation_sample = 8;
  std::vector<double> mixture_ratios{0.0, 0.01, 0.05, 0.10, 0.35};

  // Throws ContractViolation.
  void validate() const;
};

// Reads a JSON config. Unknown keys and malformed values throw ParseError.
// RMGEN_OUTPUT_DIR, when set, replaces output_dir.
ExperimentConfig read_config(const std::string& path);
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);
void apply_environment(ExperimentConfig& config);

}  // namespace rmgen::harness
