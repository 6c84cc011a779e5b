#include "rmgen/training/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "rmgen/common/error.hpp"
#include "rmgen/common/rng.hpp"
#include "rmgen/numerics/ops.hpp"

namespace rmgen::train {

using model::RewardModel;
using model::TokenIds;
using num::Tape;
using num::Tensor;
using num::TensorMap;
using num::Var;
using num::VarMap;
using Trainable = std::function<bool(const std::string&)>;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::uint64_t checksum(const RewardModel& m, const Trainable& trainable) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, t] : m.params) {
    if (trainable(name)) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

// Adds d(loss)/d(param) for every trainable parameter into `grads`.
void accumulate(const Tape& tape, const VarMap& p, const Trainable& trainable,
                TensorMap& grads) {
  for (const auto& [name, var] : p) {
    if (!trainable(name)) continue;
    const Tensor g = tape.grad(var);
    auto it = grads.find(name);
    if (it == grads.end()) {
      grads.emplace(name, g);
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
    }
  }
}

// One shuffled pass after another over [0, n).
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.shuffle(std::span<std::size_t>(order_));
  }

  std::vector<std::size_t> next(std::size_t k) {
    std::vector<std::size_t> out;
    while (out.size() < k) {
      if (cursor_ == order_.size()) {
        rng_.shuffle(std::span<std::size_t>(order_));
        cursor_ = 0;
      }
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t cursor_ = 0;
};

void check_finite(double loss, std::size_t step) {
  if (!std::isfinite(loss))
    throw NumericError("training diverged at step " + std::to_string(step) +
                       " (loss is not finite)");
}

}  // namespace

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "TrainConfig: learning_rate must be positive");
  require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  require(max_steps >= 1, "TrainConfig: max_steps must be >= 1");
  require(checkpoint_every >= 1 && max_steps % checkpoint_every == 0,
          "TrainConfig: checkpoint_every must divide max_steps");
  require(eval_fraction > 0.0 && eval_fraction < 0.5,
          "TrainConfig: eval_fraction must be in (0, 0.5)");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0,
          "TrainConfig: bad Adam constants");
}

TrainConfig lora_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  return c;
}

TrainConfig prompt_tuning_config(std::uint64_t seed) {
  TrainConfig c;
  c.learning_rate = 0.0052;
  c.seed = seed;
  return c;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(TensorMap& params, const TensorMap& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    require(pit != params.end(), "Adam: gradient for unknown parameter " + name);
    Tensor& w = pit->second;
    require(w.shape() == g.shape(), "Adam: gradient shape mismatch for " + name);
    auto [mit, m_new] = m_.try_emplace(name, Tensor(g.shape()));
    auto [vit, v_new] = v_.try_emplace(name, Tensor(g.shape()));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::vector<EncodedPair> encode_pairs(const std::vector<data::PreferenceExample>& examples) {
  const auto& vocab = model::Vocabulary::standard();
  std::vector<EncodedPair> out;
  out.reserve(examples.size());
  for (const auto& e : examples)
    out.push_back({model::encode_pair(vocab, e.prompt, e.preferred),
                   model::encode_pair(vocab, e.prompt, e.dispreferred)});
  return out;
}

double pairwise_loss(const RewardModel& model, const std::vector<EncodedPair>& pairs) {
  require(!pairs.empty(), "pairwise_loss: no pairs");
  double total = 0.0;
  for (const auto& p : pairs)
    total -= num::log_logistic(model::reward_logit(model, p.preferred) -
                               model::reward_logit(model, p.dispreferred));
  return total / static_cast<double>(pairs.size());
}

double pairwise_accuracy(const RewardModel& model, const std::vector<EncodedPair>& pairs) {
  require(!pairs.empty(), "pairwise_accuracy: no pairs");
  std::size_t right = 0;
  for (const auto& p : pairs)
    right += model::reward_logit(model, p.preferred) > model::reward_logit(model, p.dispreferred);
  return static_cast<double>(right) / static_cast<double>(pairs.size());
}

std::size_t select_checkpoint(const std::vector<double>& eval_losses) {
  require(!eval_losses.empty(), "select_checkpoint: no checkpoints");
  std::size_t best = 0;
  for (std::size_t i = 0; i < eval_losses.size(); ++i) {
    require(std::isfinite(eval_losses[i]), "select_checkpoint: non-finite eval loss");
    if (eval_losses[i] < eval_losses[best]) best = i;
  }
  return best;
}

std::size_t trainable_count(const RewardModel& model, const Trainable& trainable) {
  std::size_t n = 0;
  for (const auto& [name, t] : model.params)
    if (trainable(name)) n += t.size();
  return n;
}

TuneResult tune_reward(const RewardModel& base, const std::vector<data::PreferenceExample>& examples,
                       const TrainConfig& config, const Trainable& trainable,
                       const CheckpointHook& on_checkpoint) {
  config.validate();
  require(examples.size() >= 2, "tune_reward: need at least two examples");
  require(trainable_count(base, trainable) > 0, "tune_reward: empty trainable set");
  const auto start = Clock::now();

  const std::vector<EncodedPair> all = encode_pairs(examples);
  std::size_t n_eval = static_cast<std::size_t>(
      std::llround(config.eval_fraction * static_cast<double>(all.size())));
  n_eval = std::clamp<std::size_t>(n_eval, 1, all.size() - 1);
  const std::vector<EncodedPair> train(all.begin(), all.end() - static_cast<long>(n_eval));
  const std::vector<EncodedPair> eval(all.end() - static_cast<long>(n_eval), all.end());

  TuneResult result;
  result.train_size = train.size();
  result.eval_size = eval.size();

  RewardModel m = base;
  const std::uint64_t frozen = checksum(m, trainable);
  Adam adam(config.learning_rate, config.beta1, config.beta2, config.epsilon);
  BatchSampler sampler(train.size(), derive_seed(config.seed, "batches"));
  const std::size_t batch = std::min(config.batch_size, train.size());
  std::vector<TensorMap> snapshots;

  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    TensorMap grads;
    double batch_loss = 0.0;
    for (std::size_t idx : sampler.next(batch)) {
      Tape tape;
      const VarMap p = model::bind_params(m, tape, trainable);
      const Var r_pref = model::reward_head(p, model::run_forward(m, tape, p, train[idx].preferred));
      const Var r_disp =
          model::reward_head(p, model::run_forward(m, tape, p, train[idx].dispreferred));
      const Var loss = num::scale(num::log_sigmoid(num::sub(r_pref, r_disp)),
                                  -1.0 / static_cast<double>(batch));
      batch_loss += loss.value()[0];
      tape.backward(loss);
      accumulate(tape, p, trainable, grads);
    }
    check_finite(batch_loss, step);
    adam.step(m.params, grads);

    StepRecord rec{step, batch_loss, -1.0, 0.0};
    if (step % config.checkpoint_every == 0) {
      if (checksum(m, trainable) != frozen)
        throw std::logic_error("tune_reward: frozen parameters changed by step " +
                               std::to_string(step));
      rec.eval_loss = pairwise_loss(m, eval);
      check_finite(rec.eval_loss, step);
      result.checkpoints.push_back({step, rec.eval_loss});
      TensorMap snap;
      for (const auto& [name, t] : m.params)
        if (trainable(name)) snap.emplace(name, t);
      snapshots.push_back(std::move(snap));
      if (on_checkpoint) on_checkpoint(step, m);
    }
    rec.seconds = seconds_since(start);
    result.history.push_back(rec);
  }

  std::vector<double> losses;
  for (const auto& c : result.checkpoints) losses.push_back(c.eval_loss);
  result.selected = select_checkpoint(losses);
  for (auto& [name, t] : snapshots[result.selected]) m.params[name] = std::move(t);
  m.lineage.push_back("tune seed=" + std::to_string(config.seed) + " lr=" +
                      std::to_string(config.learning_rate) + " step=" +
                      std::to_string(result.checkpoints[result.selected].step));
  result.model = std::move(m);
  return result;
}

TuneResult tune_reward_lora(const RewardModel& model,
                            const std::vector<data::PreferenceExample>& examples,
                            const TrainConfig& config, const CheckpointHook& on_checkpoint) {
  require(model.lora.has_value(), "tune_reward_lora: no adapters attached");
  return tune_reward(
      model, examples, config,
      [](const std::string& name) {
        return model::is_lora_param(name) || model::is_reward_head_param(name);
      },
      on_checkpoint);
}

TuneResult tune_prompt(const RewardModel& model,
                       const std::vector<data::PreferenceExample>& examples,
                       const TrainConfig& config) {
  require(model.soft_prompt_len > 0, "tune_prompt: no soft prompt attached");
  return tune_reward(model, examples, config, [](const std::string& name) {
    return name == "soft_prompt" || model::is_reward_head_param(name);
  });
}

void write_metrics(const std::vector<StepRecord>& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics " + path);
  out << "step,train_loss,eval_loss\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,", r.step, r.train_loss);
    out << buf;
    if (r.eval_loss >= 0.0) {
      std::snprintf(buf, sizeof buf, "%.17g", r.eval_loss);
      out << buf;
    }
    out << '\n';
  }
}

void PretrainConfig::validate() const {
  require(learning_rate > 0.0, "PretrainConfig: learning_rate must be positive");
  require(batch_docs >= 1 && max_steps >= 1, "PretrainConfig: empty schedule");
  require(heldout_fraction > 0.0 && heldout_fraction < 0.5,
          "PretrainConfig: heldout_fraction must be in (0, 0.5)");
  require(clip_norm >= 0.0, "PretrainConfig: clip_norm must be >= 0");
}

double lm_loss(const RewardModel& model, const std::vector<TokenIds>& docs) {
  require(!docs.empty(), "lm_loss: no documents");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& d : docs) {
    require(d.size() >= 2, "lm_loss: document shorter than two tokens");
    const auto out = model::lm_logits(model, std::span<const std::size_t>(d.data(), d.size() - 1));
    for (std::size_t i = 0; i + 1 < d.size(); ++i) {
      const Tensor lsm = num::log_softmax_row(out.logits.row(i));
      total -= lsm[d[i + 1]];
    }
    count += d.size() - 1;
  }
  return total / static_cast<double>(count);
}

PretrainResult pretrain_lm(const RewardModel& base, const std::vector<TokenIds>& docs,
                           const PretrainConfig& config) {
  config.validate();
  require(docs.size() >= 2, "pretrain_lm: need at least two documents");
  for (const auto& d : docs) {
    require(d.size() >= 2, "pretrain_lm: document shorter than two tokens");
    require(d.size() - 1 <= base.config.context_len, "pretrain_lm: document exceeds context");
  }
  const auto start = Clock::now();
  std::size_t n_held = static_cast<std::size_t>(
      std::llround(config.heldout_fraction * static_cast<double>(docs.size())));
  n_held = std::clamp<std::size_t>(n_held, 1, docs.size() - 1);
  const std::vector<TokenIds> train(docs.begin(), docs.end() - static_cast<long>(n_held));
  const std::vector<TokenIds> held(docs.end() - static_cast<long>(n_held), docs.end());

  const Trainable trainable = [](const std::string& name) {
    return !model::is_reward_head_param(name) && !model::is_lora_param(name) &&
           name != "soft_prompt";
  };

  PretrainResult result;
  RewardModel m = base;
  try {
    result.initial_heldout_loss = lm_loss(m, held);
  } catch (const NumericError& e) {
    throw NumericError(std::string("pretraining diverged at step 0: ") + e.what());
  }
  Adam adam(config.learning_rate);
  BatchSampler sampler(train.size(), derive_seed(config.seed, "pretrain"));
  const std::size_t batch = std::min(config.batch_docs, train.size());

  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    std::vector<std::size_t> picks = sampler.next(batch);
    std::size_t tokens = 0;
    for (std::size_t i : picks) tokens += train[i].size() - 1;
    TensorMap grads;
    double loss_sum = 0.0;
    try {
      for (std::size_t i : picks) {
        const TokenIds& d = train[i];
        const std::span<const std::size_t> input(d.data(), d.size() - 1);
        const std::span<const std::size_t> targets(d.data() + 1, d.size() - 1);
        Tape tape;
        const VarMap p = model::bind_params(m, tape, trainable);
        const Var logits = model::lm_head(m, p, model::run_forward(m, tape, p, input));
        // cross_entropy averages over this document; reweight by its share of
        // the batch's predicted tokens.
        const Var loss = num::scale(num::cross_entropy(logits, targets),
                                    static_cast<double>(d.size() - 1) /
                                        static_cast<double>(tokens));
        loss_sum += loss.value()[0];
        tape.backward(loss);
        accumulate(tape, p, trainable, grads);
      }
    } catch (const NumericError& e) {
      throw NumericError("pretraining diverged at step " + std::to_string(step) + ": " +
                         e.what());
    }
    check_finite(loss_sum, step);
    if (config.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& [name, g] : grads)
        for (double x : g.values()) sq += x * x;
      const double norm = std::sqrt(sq);
      if (norm > config.clip_norm)
        for (auto& [name, g] : grads)
          for (double& x : g.values()) x *= config.clip_norm / norm;
    }
    adam.step(m.params, grads);
    result.train_losses.push_back(loss_sum);
    if (step % std::max<std::size_t>(config.log_every, 1) == 0 || step == config.max_steps)
      result.history.push_back({step, loss_sum, -1.0, seconds_since(start)});
  }
  result.final_heldout_loss = lm_loss(m, held);
  if (!result.history.empty()) result.history.back().eval_loss = result.final_heldout_loss;
  m.lineage.push_back("pretrain seed=" + std::to_string(config.seed) +
                      " steps=" + std::to_string(config.max_steps));
  result.model = std::move(m);
  return result;
}

PretrainResult pretrain_lm(const RewardModel& model, const data::Corpus& corpus,
                           const PretrainConfig& config) {
  std::vector<TokenIds> docs;
  docs.reserve(corpus.documents.size());
  for (const auto& d : corpus.documents) docs.push_back(d.tokens);
  return pretrain_lm(model, docs, config);
}

}  // namespace rmgen::train
