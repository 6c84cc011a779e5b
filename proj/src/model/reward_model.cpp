#include "rmgen/model/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>

#include "rmgen/common/error.hpp"
#include "rmgen/common/rng.hpp"
#include "rmgen/numerics/ops.hpp"

namespace rmgen::model {

using num::Shape;
using num::Tape;
using num::Tensor;
using num::Var;
using num::VarMap;

namespace {

std::string block(std::size_t l, const char* suffix) {
  return "blocks." + std::to_string(l) + "." + suffix;
}

std::string lora_name(std::size_t l, const std::string& site, const char* part) {
  return "lora." + std::to_string(l) + "." + site + "." + part;
}

Tensor normal_tensor(Shape shape, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
  return t;
}

Tensor uniform_tensor(Shape shape, double bound, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = bound * (2.0 * rng.uniform() - 1.0);
  return t;
}

const Var& get(const VarMap& p, const std::string& name) {
  auto it = p.find(name);
  require(it != p.end(), "missing parameter " + name);
  return it->second;
}

Var project(const RewardModel& model, const VarMap& p, const Var& x, std::size_t l,
            const std::string& site) {
  Var y = num::matmul(x, get(p, block(l, ("attn." + site).c_str())));
  if (model.lora) {
    const auto& sites = model.lora->sites;
    if (std::find(sites.begin(), sites.end(), site) != sites.end()) {
      const Var& a = get(p, lora_name(l, site, "A"));
      const Var& b = get(p, lora_name(l, site, "B"));
      const double s = model.lora->alpha / static_cast<double>(model.lora->rank);
      y = num::add(y, num::scale(num::matmul_nt(num::matmul_nt(x, a), b), s));
    }
  }
  return y;
}

}  // namespace

void ModelConfig::validate() const {
  require(vocab_size >= 1 && context_len >= 1 && n_layers >= 1 && n_heads >= 1 &&
              model_dim >= 1 && ff_dim >= 1,
          "ModelConfig: all counts must be >= 1");
  require(model_dim % n_heads == 0, "ModelConfig: model_dim must be divisible by n_heads");
}

ModelConfig default_config() {
  ModelConfig c;
  c.vocab_size = Vocabulary::standard().size();
  return c;
}

RewardModel build_model(const ModelConfig& config) {
  config.validate();
  RewardModel m;
  m.config = config;
  const std::size_t d = config.model_dim, V = config.vocab_size, f = config.ff_dim;
  const double base = 0.02;
  const double resid = base / std::sqrt(2.0 * static_cast<double>(config.n_layers));
  auto seed_for = [&](const std::string& name) { return derive_seed(config.seed, name); };
  auto put_normal = [&](const std::string& name, Shape shape, double sd) {
    m.params.emplace(name, normal_tensor(std::move(shape), sd, seed_for(name)));
  };
  put_normal("tok_emb", {V, d}, base);
  put_normal("pos_emb", {config.context_len, d}, base);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    m.params.emplace(block(l, "ln1.g"), Tensor({d}, 1.0));
    m.params.emplace(block(l, "ln1.b"), Tensor({d}, 0.0));
    put_normal(block(l, "attn.q"), {d, d}, base);
    put_normal(block(l, "attn.k"), {d, d}, base);
    put_normal(block(l, "attn.v"), {d, d}, base);
    put_normal(block(l, "attn.o"), {d, d}, resid);
    m.params.emplace(block(l, "ln2.g"), Tensor({d}, 1.0));
    m.params.emplace(block(l, "ln2.b"), Tensor({d}, 0.0));
    put_normal(block(l, "mlp.w1"), {d, f}, base);
    m.params.emplace(block(l, "mlp.b1"), Tensor({f}, 0.0));
    put_normal(block(l, "mlp.w2"), {f, d}, resid);
    m.params.emplace(block(l, "mlp.b2"), Tensor({d}, 0.0));
  }
  m.params.emplace("ln_f.g", Tensor({d}, 1.0));
  m.params.emplace("ln_f.b", Tensor({d}, 0.0));
  put_normal("lm_head", {d, V}, base);
  m.lineage.push_back("init seed=" + std::to_string(config.seed));
  reseed_reward_head(m, derive_seed(config.seed, "reward_head"));
  m.lineage.pop_back();
  return m;
}

void reseed_reward_head(RewardModel& model, std::uint64_t seed) {
  const std::size_t d = model.config.model_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(seed);
  model.params["reward_head.w"] = uniform_tensor({d}, bound, rng.next_u64());
  model.params["reward_head.b"] = uniform_tensor({1}, bound, rng.next_u64());
  model.lineage.push_back("reward_head seed=" + std::to_string(seed));
}

void attach_lora(RewardModel& model, std::size_t rank, std::vector<std::string> sites,
                 double alpha, std::uint64_t seed) {
  require(rank >= 1, "attach_lora: rank must be >= 1");
  require(!model.lora, "attach_lora: adapters already attached");
  require(!sites.empty(), "attach_lora: no sites");
  std::set<std::string> seen;
  for (const auto& s : sites) {
    require(s == "q" || s == "k" || s == "v" || s == "o",
            "attach_lora: unknown site '" + s + "'");
    require(seen.insert(s).second, "attach_lora: duplicate site '" + s + "'");
  }
  const std::size_t d = model.config.model_dim;
  for (std::size_t l = 0; l < model.config.n_layers; ++l) {
    for (const auto& s : sites) {
      const std::string a = lora_name(l, s, "A");
      model.params[a] = normal_tensor({rank, d}, 1.0 / std::sqrt(static_cast<double>(d)),
                                      derive_seed(seed, a));
      model.params[lora_name(l, s, "B")] = Tensor({d, rank}, 0.0);
    }
  }
  model.lora = LoraSpec{rank, alpha, std::move(sites), seed};
  model.lineage.push_back("lora rank=" + std::to_string(rank) + " seed=" + std::to_string(seed));
}

void attach_soft_prompt(RewardModel& model, const TokenIds& init_tokens) {
  const std::size_t k = init_tokens.size();
  require(k >= 1, "attach_soft_prompt: k must be >= 1");
  require(k < model.config.context_len, "attach_soft_prompt: prompt fills the context");
  require(model.soft_prompt_len == 0, "attach_soft_prompt: soft prompt already attached");
  const Tensor& emb = model.params.at("tok_emb");
  const std::size_t d = model.config.model_dim;
  Tensor sp({k, d});
  for (std::size_t i = 0; i < k; ++i) {
    require(init_tokens[i] < model.config.vocab_size, "attach_soft_prompt: bad token id");
    std::copy_n(emb.row(init_tokens[i]).data(), d, sp.row(i).data());
  }
  model.params["soft_prompt"] = std::move(sp);
  model.soft_prompt_len = k;
}

void attach_soft_prompt(RewardModel& model, std::size_t k, std::uint64_t seed) {
  require(k >= 1, "attach_soft_prompt: k must be >= 1");
  Rng rng(seed);
  TokenIds ids(k);
  for (auto& id : ids) id = rng.below(model.config.vocab_size);
  attach_soft_prompt(model, ids);
  model.lineage.push_back("soft_prompt k=" + std::to_string(k) + " seed=" + std::to_string(seed));
}

std::size_t lora_param_count(const RewardModel& model) {
  std::size_t n = 0;
  for (const auto& [name, t] : model.params)
    if (is_lora_param(name)) n += t.size();
  return n;
}

bool is_lora_param(const std::string& name) { return name.rfind("lora.", 0) == 0; }
bool is_reward_head_param(const std::string& name) {
  return name.rfind("reward_head.", 0) == 0;
}

VarMap bind_params(const RewardModel& model, Tape& tape,
                   const std::function<bool(const std::string&)>& trainable) {
  VarMap p;
  for (const auto& [name, t] : model.params)
    p.emplace(name, tape.leaf(t, trainable && trainable(name)));
  return p;
}

Trace run_forward(const RewardModel& model, Tape&, const VarMap& p,
                  std::span<const std::size_t> ids) {
  const ModelConfig& c = model.config;
  const std::size_t k = model.soft_prompt_len;
  const std::size_t n = ids.size();
  require(n >= 1, "forward: empty sequence");
  require(k + n <= c.context_len, "forward: sequence of " + std::to_string(n) +
                                      " tokens (+" + std::to_string(k) +
                                      " soft) exceeds context " +
                                      std::to_string(c.context_len));
  for (std::size_t id : ids) require(id < c.vocab_size, "forward: token id out of range");

  Var x = num::embedding(get(p, "tok_emb"), ids);
  if (k > 0) x = num::concat_rows({get(p, "soft_prompt"), x});
  x = num::add(x, num::slice_rows(get(p, "pos_emb"), 0, k + n));

  Trace trace;
  trace.offset = k;
  const std::size_t dh = c.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const Var h = num::layer_norm_rows(x, get(p, block(l, "ln1.g")), get(p, block(l, "ln1.b")));
    const Var q = project(model, p, h, l, "q");
    const Var kk = project(model, p, h, l, "k");
    const Var v = project(model, p, h, l, "v");
    std::vector<Var> heads;
    heads.reserve(c.n_heads);
    for (std::size_t hd = 0; hd < c.n_heads; ++hd) {
      const Var qh = num::slice_cols(q, hd * dh, dh);
      const Var kh = num::slice_cols(kk, hd * dh, dh);
      const Var vh = num::slice_cols(v, hd * dh, dh);
      const Var att = num::causal_softmax(num::scale(num::matmul_nt(qh, kh), inv_sqrt));
      heads.push_back(num::matmul(att, vh));
    }
    const Var attn = c.n_heads == 1 ? heads[0] : num::concat_cols(heads);
    trace.attn.push_back(attn);
    x = num::add(x, project(model, p, attn, l, "o"));
    const Var h2 = num::layer_norm_rows(x, get(p, block(l, "ln2.g")), get(p, block(l, "ln2.b")));
    const Var ff = num::gelu(num::add_row(num::matmul(h2, get(p, block(l, "mlp.w1"))),
                                          get(p, block(l, "mlp.b1"))));
    x = num::add(x, num::add_row(num::matmul(ff, get(p, block(l, "mlp.w2"))),
                                 get(p, block(l, "mlp.b2"))));
    trace.residual.push_back(x);
  }
  trace.final_hidden = num::layer_norm_rows(x, get(p, "ln_f.g"), get(p, "ln_f.b"));
  return trace;
}

Var lm_head(const RewardModel& model, const VarMap& p, const Trace& trace) {
  (void)model;
  Var h = trace.final_hidden;
  if (trace.offset > 0) h = num::slice_rows(h, trace.offset, h.value().rows() - trace.offset);
  return num::matmul(h, get(p, "lm_head"));
}

Var reward_head(const VarMap& p, const Trace& trace) {
  const Var& h = trace.final_hidden;
  const Var last = num::slice_rows(h, h.value().rows() - 1, 1);
  return num::add(num::dot(last, get(p, "reward_head.w")), get(p, "reward_head.b"));
}

namespace {

Vec row_of(const Tensor& t, std::size_t r, std::size_t start, std::size_t count) {
  const auto row = t.row(r);
  return Vec(row.begin() + static_cast<std::ptrdiff_t>(start),
             row.begin() + static_cast<std::ptrdiff_t>(start + count));
}

ActivationRecord make_record(const RewardModel& model, const Trace& trace,
                             std::size_t n, std::vector<std::size_t> positions) {
  const ModelConfig& c = model.config;
  if (positions.empty()) positions.push_back(n - 1);
  ActivationRecord rec;
  for (std::size_t pos : positions) {
    require(pos < n, "capture: position " + std::to_string(pos) + " out of range");
    std::vector<Vec> per_layer;
    for (std::size_t l = 0; l < c.n_layers; ++l)
      per_layer.push_back(row_of(trace.residual[l].value(), trace.offset + pos, 0, c.model_dim));
    rec.hidden.push_back(std::move(per_layer));
  }
  const std::size_t dh = c.head_dim();
  const std::size_t last = trace.offset + n - 1;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    std::vector<Vec> per_head;
    for (std::size_t h = 0; h < c.n_heads; ++h)
      per_head.push_back(row_of(trace.attn[l].value(), last, h * dh, dh));
    rec.head_out.push_back(std::move(per_head));
  }
  rec.positions = std::move(positions);
  return rec;
}

}  // namespace

LmOutput lm_logits(const RewardModel& model, std::span<const std::size_t> ids, bool capture) {
  Tape tape(false);
  const VarMap p = bind_params(model, tape, nullptr);
  const Trace trace = run_forward(model, tape, p, ids);
  LmOutput out;
  out.logits = lm_head(model, p, trace).value();
  if (capture) out.record = make_record(model, trace, ids.size(), {});
  return out;
}

double reward_logit(const RewardModel& model, std::span<const std::size_t> ids) {
  Tape tape(false);
  const VarMap p = bind_params(model, tape, nullptr);
  return reward_head(p, run_forward(model, tape, p, ids)).value()[0];
}

double reward_logit(const RewardModel& model, std::span<const std::size_t> prompt,
                    std::span<const std::size_t> response) {
  TokenIds ids(prompt.begin(), prompt.end());
  ids.insert(ids.end(), response.begin(), response.end());
  return reward_logit(model, ids);
}

double prefer_prob_from_logits(double logit_a, double logit_b) {
  return num::logistic(logit_a - logit_b);
}

double prefer_prob(const RewardModel& model, std::span<const std::size_t> prompt,
                   std::span<const std::size_t> a, std::span<const std::size_t> b) {
  return prefer_prob_from_logits(reward_logit(model, prompt, a), reward_logit(model, prompt, b));
}

ActivationRecord capture_activations(const RewardModel& model,
                                     std::span<const std::size_t> ids,
                                     std::vector<std::size_t> positions) {
  Tape tape(false);
  const VarMap p = bind_params(model, tape, nullptr);
  const Trace trace = run_forward(model, tape, p, ids);
  return make_record(model, trace, ids.size(), std::move(positions));
}

std::string model_fingerprint(const RewardModel& model) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const ModelConfig& c = model.config;
  for (std::size_t v : {c.vocab_size, c.context_len, c.n_layers, c.n_heads, c.model_dim,
                        c.ff_dim})
    mix(&v, sizeof v);
  for (const auto& [name, t] : model.params) {
    mix(name.data(), name.size());
    mix(t.data(), t.size() * sizeof(double));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rmgen::model
