#include "rmgen/harness/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rmgen/common/error.hpp"
#include "rmgen/eval/metrics.hpp"

namespace rmgen::harness {

using Json = nlohmann::ordered_json;

const std::vector<std::string>& all_interventions() {
  static const std::vector<std::string> ids{"zero_shot", "few_shot", "lora", "prompt_tuning",
                                            "mms",       "lat1",     "lat2", "cra",
                                            "ccs",       "random"};
  return ids;
}

void ExperimentConfig::validate() const {
  model.validate();
  const auto& known = all_interventions();
  require(!interventions.empty(), "config: no interventions");
  for (const auto& i : interventions)
    require(std::find(known.begin(), known.end(), i) != known.end(),
            "config: unknown intervention '" + i + "'");
  const auto& catalog = eval::ttc_catalog();
  for (const auto& c : ttc_candidates)
    require(std::find(catalog.begin(), catalog.end(), c) != catalog.end(),
            "config: unknown capability candidate '" + c + "'");
  require(threads >= 1, "config: threads must be >= 1");
  require(sizes.train >= 2 && sizes.eval >= 1, "config: split sizes too small");
  require(ttc_budget >= 3, "config: ttc_budget must be >= 3");
  require(tune_steps >= 1 && checkpoint_every >= 1 && tune_steps % checkpoint_every == 0,
          "config: checkpoint_every must divide tune_steps");
  require(batch_size >= 1 && lora_rank >= 1 && soft_prompt_tokens >= 1,
          "config: batch_size, lora_rank and soft_prompt_tokens must be >= 1");
  require(ccs_restarts >= 1 && ccs_iterations >= 1, "config: empty CCS schedule");
  require(!output_dir.empty(), "config: empty output_dir");
  for (double r : mixture_ratios)
    require(r >= 0.0 && r <= 1.0, "config: mixture ratios must lie in [0, 1]");
}

namespace {

template <class T>
T value_of(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(0, "config: expected an object");
  static const std::set<std::string> keys{
      "checkpoint",    "model",          "pretrain_steps", "corpus_tokens",  "registry",
      "shifts",        "interventions",  "ttc_candidates", "seed",           "output_dir",
      "threads",       "train_size",     "eval_size",      "ttc_budget",     "tune_steps",
      "checkpoint_every", "batch_size",  "lora_rank",      "soft_prompt_tokens", "few_shots",
      "ccs_restarts",  "ccs_iterations", "isolation_sample", "mixture_ratios"};
  for (const auto& [key, _] : j.items())
    if (!keys.count(key)) throw ParseError(0, "config: unknown key '" + key + "'");

  ExperimentConfig c;
  auto set = [&](const char* key, auto& field) {
    if (j.contains(key)) field = value_of<std::decay_t<decltype(field)>>(j, key);
  };
  set("checkpoint", c.checkpoint);
  if (j.contains("model")) {
    const Json& m = j.at("model");
    static const std::set<std::string> model_keys{"layers", "heads", "dim", "ff", "context",
                                                  "seed"};
    if (!m.is_object()) throw ParseError(0, "config: 'model' must be an object");
    for (const auto& [key, _] : m.items())
      if (!model_keys.count(key)) throw ParseError(0, "config: unknown model key '" + key + "'");
    auto mset = [&](const char* key, auto& field) {
      if (m.contains(key)) field = value_of<std::decay_t<decltype(field)>>(m, key);
    };
    mset("layers", c.model.n_layers);
    mset("heads", c.model.n_heads);
    mset("dim", c.model.model_dim);
    mset("ff", c.model.ff_dim);
    mset("context", c.model.context_len);
    mset("seed", c.model.seed);
  }
  set("pretrain_steps", c.pretrain_steps);
  set("corpus_tokens", c.corpus_tokens);
  set("registry", c.registry);
  set("shifts", c.shifts);
  set("interventions", c.interventions);
  set("ttc_candidates", c.ttc_candidates);
  set("seed", c.seed);
  set("output_dir", c.output_dir);
  set("threads", c.threads);
  set("train_size", c.sizes.train);
  set("eval_size", c.sizes.eval);
  set("ttc_budget", c.ttc_budget);
  set("tune_steps", c.tune_steps);
  set("checkpoint_every", c.checkpoint_every);
  set("batch_size", c.batch_size);
  set("lora_rank", c.lora_rank);
  set("soft_prompt_tokens", c.soft_prompt_tokens);
  set("few_shots", c.few_shots);
  set("ccs_restarts", c.ccs_restarts);
  set("ccs_iterations", c.ccs_iterations);
  set("isolation_sample", c.isolation_sample);
  set("mixture_ratios", c.mixture_ratios);
  try {
    c.validate();
  } catch (const ContractViolation& e) {
    throw ParseError(0, e.what());
  }
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  Json j;
  j["checkpoint"] = c.checkpoint;
  j["model"] = {{"layers", c.model.n_layers}, {"heads", c.model.n_heads},
                {"dim", c.model.model_dim},   {"ff", c.model.ff_dim},
                {"context", c.model.context_len}, {"seed", c.model.seed}};
  j["pretrain_steps"] = c.pretrain_steps;
  j["corpus_tokens"] = c.corpus_tokens;
  j["registry"] = c.registry;
  j["shifts"] = c.shifts;
  j["interventions"] = c.interventions;
  j["ttc_candidates"] = c.ttc_candidates;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["train_size"] = c.sizes.train;
  j["eval_size"] = c.sizes.eval;
  j["ttc_budget"] = c.ttc_budget;
  j["tune_steps"] = c.tune_steps;
  j["checkpoint_every"] = c.checkpoint_every;
  j["batch_size"] = c.batch_size;
  j["lora_rank"] = c.lora_rank;
  j["soft_prompt_tokens"] = c.soft_prompt_tokens;
  j["few_shots"] = c.few_shots;
  j["ccs_restarts"] = c.ccs_restarts;
  j["ccs_iterations"] = c.ccs_iterations;
  j["isolation_sample"] = c.isolation_sample;
  j["mixture_ratios"] = c.mixture_ratios;
  return j.dump(2) + "\n";
}

void apply_environment(ExperimentConfig& c) {
  if (const char* dir = std::getenv("RMGEN_OUTPUT_DIR"); dir && *dir) c.output_dir = dir;
}

ExperimentConfig read_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractViolation("cannot read config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  ExperimentConfig c = config_from_json(ss.str());
  apply_environment(c);
  return c;
}

}  // namespace rmgen::harness
