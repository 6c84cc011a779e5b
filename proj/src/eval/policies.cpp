#include "rmgen/eval/policies.hpp"

#include "rmgen/common/error.hpp"
#include "rmgen/common/rng.hpp"
#include "rmgen/numerics/ops.hpp"

namespace rmgen::eval {
namespace {

const model::Vocabulary& vocab() { return model::Vocabulary::standard(); }

std::size_t response_start(const model::TokenIds& ids, const std::string& response) {
  const std::size_t r = vocab().encode(response).size();
  require(r > 0, "empty response");
  return ids.size() - r;
}

}  // namespace

PolicyVerdict verdict_from_margin(const std::string& id, double margin, double p_preferred) {
  PolicyVerdict v;
  v.example_id = id;
  v.tie = margin == 0.0;
  v.chose_preferred = margin > 0.0;
  v.correct = v.chose_preferred;
  v.probability = v.chose_preferred ? p_preferred : 1.0 - p_preferred;
  return v;
}

double average_log_prob(const model::RewardModel& model, const std::string& prompt,
                        const std::string& response) {
  const model::TokenIds ids = model::encode_pair(vocab(), prompt, response);
  const std::size_t start = response_start(ids, response);
  const num::Tensor logits = model::lm_logits(model, ids).logits;
  double total = 0.0;
  for (std::size_t i = start; i < ids.size(); ++i) {
    total += num::log_softmax_row(logits.row(i - 1))[ids[i]];
  }
  return total / static_cast<double>(ids.size() - start);
}

double average_log_prob_per_position(const model::RewardModel& model, const std::string& prompt,
                                     const std::string& response) {
  const model::TokenIds ids = model::encode_pair(vocab(), prompt, response);
  const std::size_t start = response_start(ids, response);
  double total = 0.0;
  for (std::size_t i = start; i < ids.size(); ++i) {
    const std::span<const std::size_t> prefix(ids.data(), i);
    const num::Tensor logits = model::lm_logits(model, prefix).logits;
    total += num::log_softmax_row(logits.row(i - 1))[ids[i]];
  }
  return total / static_cast<double>(ids.size() - start);
}

PolicyVerdict zero_shot_classify(const model::RewardModel& model,
                                 const data::PreferenceExample& e) {
  const double lp = average_log_prob(model, e.prompt, e.preferred);
  const double ld = average_log_prob(model, e.prompt, e.dispreferred);
  return verdict_from_margin(e.id, lp - ld, num::logistic(lp - ld));
}

std::string few_shot_prompt(const data::PreferenceExample& e,
                            const std::vector<data::PreferenceExample>& source,
                            std::size_t shots, std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < source.size(); ++i)
    if (source[i].id != e.id) pool.push_back(i);
  require(shots <= pool.size(), "few_shot_prompt: not enough source examples for " +
                                    std::to_string(shots) + " shots");
  Rng rng(derive_seed(seed, e.id));
  std::string out;
  for (std::size_t s = 0; s < shots; ++s) {
    const std::size_t j = s + rng.below(pool.size() - s);
    std::swap(pool[s], pool[j]);
    const auto& shot = source[pool[s]];
    out += "# Example\n" + shot.prompt + "\n" + shot.preferred + "\n";
  }
  return out + e.prompt;
}

std::optional<PolicyVerdict> few_shot_classify(const model::RewardModel& model,
                                               const data::PreferenceExample& e,
                                               const std::vector<data::PreferenceExample>& source,
                                               std::size_t shots, std::uint64_t seed) {
  data::PreferenceExample assembled = e;
  assembled.prompt = few_shot_prompt(e, source, shots, seed);
  const std::size_t limit = model.config.context_len;
  for (const std::string* r : {&e.preferred, &e.dispreferred}) {
    if (model::encode_pair(vocab(), assembled.prompt, *r).size() > limit) return std::nullopt;
  }
  return zero_shot_classify(model, assembled);
}

PolicyVerdict reward_classify(const model::RewardModel& model,
                              const data::PreferenceExample& e) {
  const double lp = model::reward_logit(model, model::encode_pair(vocab(), e.prompt, e.preferred));
  const double ld =
      model::reward_logit(model, model::encode_pair(vocab(), e.prompt, e.dispreferred));
  return verdict_from_margin(e.id, lp - ld, model::prefer_prob_from_logits(lp, ld));
}

}  // namespace rmgen::eval
