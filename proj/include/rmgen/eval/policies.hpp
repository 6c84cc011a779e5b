#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmgen/data/dataset.hpp"
#include "rmgen/model/reward_model.hpp"

namespace rmgen::eval {

struct PolicyVerdict {
  std::string example_id;
  bool chose_preferred = false;
  double probability = 0.5;  // of the chosen response
  bool correct = false;      // equals chose_preferred
  bool tie = false;          // tied scores choose the dispreferred response
};

// Verdict from a score for (preferred - dispreferred) and the probability
// that the preferred response is better.
PolicyVerdict verdict_from_margin(const std::string& id, double margin, double p_preferred);

// Mean log-probability of the response tokens of "<bos> prompt <nl> response"
// under teacher forcing. Throws ContractViolation on an empty response.
double average_log_prob(const model::RewardModel& model, const std::string& prompt,
                        const std::string& response);
// Same quantity with a fresh forward pass over each prefix.
double average_log_prob_per_position(const model::RewardModel& model, const std::string& prompt,
                                     const std::string& response);

// Chooses the response with the higher average log-probability;
// probability = sigma(L_chosen - L_other).
PolicyVerdict zero_shot_classify(const model::RewardModel& model,
                                 const data::PreferenceExample& example);

inline constexpr std::size_t kFewShots = 5;

// "# Example\n<prompt>\n<preferred>\n" for each shot, then the target
// prompt. Shots are drawn without replacement from `source`, skipping the
// target's own id, with a stream fixed by (seed, example id).
std::string few_shot_prompt(const data::PreferenceExample& example,
                            const std::vector<data::PreferenceExample>& source,
                            std::size_t shots, std::uint64_t seed);

// nullopt when the assembled input exceeds the model context.
std::optional<PolicyVerdict> few_shot_classify(const model::RewardModel& model,
                                               const data::PreferenceExample& example,
                                               const std::vector<data::PreferenceExample>& source,
                                               std::size_t shots = kFewShots,
                                               std::uint64_t seed = 0);

// Reward-head comparison of the two responses.
PolicyVerdict reward_classify(const model::RewardModel& model,
                              const data::PreferenceExample& example);

}  // namespace rmgen::eval
