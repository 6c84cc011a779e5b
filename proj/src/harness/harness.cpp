#include "rmgen/harness/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "rmgen/common/error.hpp"
#include "rmgen/common/rng.hpp"
#include "rmgen/data/corpus.hpp"
#include "rmgen/model/checkpoint.hpp"
#include "rmgen/probes/probes.hpp"
#include "rmgen/training/training.hpp"

namespace rmgen::harness {

using data::PreferenceExample;
using eval::EvalReport;
using eval::PolicyVerdict;
using model::RewardModel;

namespace {

std::vector<std::string> capability_candidates(const ExperimentConfig& c) {
  return c.ttc_candidates.empty() ? eval::ttc_catalog() : c.ttc_candidates;
}

train::TrainConfig tuning_config(train::TrainConfig t, const ExperimentConfig& c) {
  t.max_steps = c.tune_steps;
  t.checkpoint_every = c.checkpoint_every;
  t.batch_size = c.batch_size;
  return t;
}

train::TuneResult tune_lora(const RewardModel& base, const std::vector<PreferenceExample>& source,
                            const ExperimentConfig& c, std::uint64_t seed,
                            const train::CheckpointHook& hook = {}) {
  RewardModel m = base;
  model::reseed_reward_head(m, derive_seed(seed, "head"));
  model::attach_lora(m, c.lora_rank, {"q", "k", "v", "o"}, 8.0, derive_seed(seed, "lora"));
  return train::tune_reward_lora(m, source, tuning_config(train::lora_config(derive_seed(seed, "tune")), c),
                                 hook);
}

Classifier reward_classifier(RewardModel m) {
  auto shared = std::make_shared<const RewardModel>(std::move(m));
  return [shared](const PreferenceExample& e) -> std::optional<PolicyVerdict> {
    return eval::reward_classify(*shared, e);
  };
}

Classifier probe_classifier(const RewardModel& base, probes::Probe probe) {
  auto m = std::make_shared<const RewardModel>(base);
  auto p = std::make_shared<const probes::Probe>(std::move(probe));
  return [m, p](const PreferenceExample& e) -> std::optional<PolicyVerdict> {
    const probes::Verdict v = probes::probe_classify(*p, *m, e.prompt, e.preferred, e.dispreferred);
    const double margin = v.tie ? 0.0 : (v.first_preferred ? 1.0 : -1.0);
    return eval::verdict_from_margin(e.id, margin, v.probability);
  };
}

bool same_verdict(const PolicyVerdict& a, const PolicyVerdict& b) {
  return a.example_id == b.example_id && a.chose_preferred == b.chose_preferred &&
         a.probability == b.probability && a.correct == b.correct && a.tie == b.tie;
}

EvalReport failed_report(const Experiment& ex, const std::string& shift,
                         const std::string& intervention, const std::string& error) {
  EvalReport r;
  r.shift = shift;
  r.intervention = intervention;
  r.model_id = ex.model_id;
  r.status = "failed";
  r.error = error;
  return r;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string ratio_label(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", ratio);
  return buf;
}

}  // namespace

std::uint64_t cell_seed(std::uint64_t global, const std::string& shift,
                        const std::string& intervention) {
  return derive_seed(derive_seed(global, shift), intervention);
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& task) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

Classifier fit_intervention(const RewardModel& base, const std::string& id,
                            const std::vector<PreferenceExample>& source,
                            const ExperimentConfig& c, std::uint64_t seed) {
  if (id == "zero_shot") {
    auto m = std::make_shared<const RewardModel>(base);
    return [m](const PreferenceExample& e) -> std::optional<PolicyVerdict> {
      return eval::zero_shot_classify(*m, e);
    };
  }
  if (id == "few_shot") {
    auto m = std::make_shared<const RewardModel>(base);
    auto src = std::make_shared<const std::vector<PreferenceExample>>(source);
    const std::size_t shots = c.few_shots;
    return [m, src, shots, seed](const PreferenceExample& e) {
      return eval::few_shot_classify(*m, e, *src, shots, seed);
    };
  }
  if (id == "lora") return reward_classifier(tune_lora(base, source, c, seed).model);
  if (id == "prompt_tuning") {
    RewardModel m = base;
    model::reseed_reward_head(m, derive_seed(seed, "head"));
    model::attach_soft_prompt(m, c.soft_prompt_tokens, derive_seed(seed, "prompt"));
    const auto t = tuning_config(train::prompt_tuning_config(derive_seed(seed, "tune")), c);
    return reward_classifier(train::tune_prompt(m, source, t).model);
  }
  probes::Probe probe;
  const std::uint64_t probe_seed = derive_seed(seed, "probe");
  if (id == "mms") {
    probe = probes::fit_mms(base, source, probes::kMmsHeads, probe_seed);
  } else if (id == "lat1" || id == "lat2") {
    probe = probes::fit_lat(base, source, id == "lat1" ? 1 : 2, probes::kLatLayers, probe_seed);
  } else if (id == "cra") {
    probe = probes::fit_cra(base, source, probes::kMmsHeads, probe_seed);
  } else if (id == "ccs") {
    probes::CcsOptions o;
    o.restarts = c.ccs_restarts;
    o.iterations = c.ccs_iterations;
    o.seed = probe_seed;
    probe = probes::fit_ccs(base, source, o);
  } else if (id == "random") {
    probe = probes::random_probe(base, source, probe_seed);
  } else {
    throw ContractViolation("unknown intervention '" + id + "'");
  }
  probe = probes::fit_probe_calibration(std::move(probe), base, source,
                                        derive_seed(seed, "calibration"));
  return probe_classifier(base, std::move(probe));
}

Evaluation evaluate_isolated(const Classifier& classify,
                             const std::vector<PreferenceExample>& examples,
                             std::size_t isolation_sample, std::uint64_t seed) {
  Evaluation out;
  std::vector<std::optional<PolicyVerdict>> first(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    first[i] = classify(examples[i]);
    if (first[i]) out.verdicts.push_back(*first[i]);
    else out.skipped.push_back({examples[i].id, "context overflow"});
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "isolation"));
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(std::min(isolation_sample, order.size()));
  for (std::size_t i : order) {
    const auto again = classify(examples[i]);
    const bool same = again.has_value() == first[i].has_value() &&
                      (!again || same_verdict(*again, *first[i]));
    if (!same)
      throw std::logic_error("verdict for " + examples[i].id + " depends on evaluation order");
  }
  return out;
}

RewardModel prepare_model(const ExperimentConfig& c) {
  if (!c.checkpoint.empty()) return model::load_checkpoint(c.checkpoint);
  RewardModel m = model::build_model(c.model);
  if (c.pretrain_steps == 0) return m;
  data::CorpusConfig cc;
  cc.min_tokens = c.corpus_tokens;
  cc.context_len = c.model.context_len;
  const data::Corpus corpus = data::build_pretrain_corpus(derive_seed(c.seed, "corpus"), cc);
  train::PretrainConfig pc;
  pc.max_steps = c.pretrain_steps;
  pc.log_every = std::max<std::size_t>(1, c.pretrain_steps / 20);
  pc.seed = derive_seed(c.seed, "pretrain");
  return train::pretrain_lm(m, corpus, pc).model;
}

ShiftData load_shift(const data::Registry& registry, const std::string& shift_id,
                     std::size_t ttc_budget) {
  ShiftData s;
  s.spec = registry.shift(shift_id);
  const data::Dataset source = data::generate(registry.dataset(s.spec.source));
  const data::Dataset target = data::generate(registry.dataset(s.spec.target));
  const data::Dataset reference = s.spec.reference == s.spec.target
                                      ? target
                                      : data::generate(registry.dataset(s.spec.reference));
  s.source = data::split_of(source, "train");
  s.target = data::split_of(target, "eval");
  s.target_train = data::split_of(target, "train");
  s.reference_train = data::split_of(reference, "train");
  if (s.reference_train.size() > ttc_budget) s.reference_train.resize(ttc_budget);
  s.reference_eval = data::split_of(reference, "eval");
  require(s.source.size() >= 2 && !s.target.empty(), "shift " + shift_id + ": empty splits");
  return s;
}

Experiment prepare_experiment(const ExperimentConfig& config, RewardModel m) {
  config.validate();
  Experiment ex;
  ex.config = config;
  ex.registry = config.registry.empty() ? data::default_registry(config.seed, config.sizes)
                                        : data::read_registry(config.registry);
  ex.registry.validate();
  if (ex.config.shifts.empty())
    for (const auto& s : ex.registry.shifts) ex.config.shifts.push_back(s.id);
  for (const auto& id : ex.config.shifts)
    ex.shifts.emplace(id, load_shift(ex.registry, id, config.ttc_budget));
  ex.model = std::move(m);
  ex.model_id = model::model_fingerprint(ex.model);
  return ex;
}

Experiment prepare_experiment(const ExperimentConfig& config) {
  config.validate();
  return prepare_experiment(config, prepare_model(config));
}

ShiftBaseline shift_baseline(const Experiment& ex, const std::string& shift_id) {
  const ShiftData& sd = ex.shifts.at(shift_id);
  const ExperimentConfig& c = ex.config;
  ShiftBaseline b;
  const std::uint64_t z_seed = cell_seed(c.seed, shift_id, "zero_shot");
  b.zero_shot = evaluate_isolated(fit_intervention(ex.model, "zero_shot", sd.source, c, z_seed),
                                  sd.target, c.isolation_sample, z_seed)
                    .verdicts;
  b.z = eval::accuracy(b.zero_shot);

  if (sd.reference_train.size() < 2 || sd.reference_eval.empty()) {
    b.error = "reference data too small for a held-out split";
    return b;
  }
  for (const auto& cand : capability_candidates(c)) {
    const std::uint64_t seed = cell_seed(c.seed, shift_id, "ttc/" + cand);
    try {
      const Classifier f = fit_intervention(ex.model, cand, sd.reference_train, c, seed);
      const Evaluation e = evaluate_isolated(f, sd.reference_eval, 0, seed);
      b.candidates.push_back({cand, eval::accuracy(e.verdicts)});
    } catch (const FitFailure& e) {
      std::cerr << "capability candidate " << cand << " on " << shift_id << ": " << e.what()
                << "\n";
    }
  }
  if (b.candidates.empty()) {
    b.error = "no capability candidate could be fitted";
    return b;
  }
  b.capability = eval::best_capability(b.candidates);
  if (!(b.capability.ttc > 0.0)) b.error = "target-tuned capability is zero";
  return b;
}

EvalReport run_cell(const Experiment& ex, const std::string& shift_id,
                    const std::string& intervention, const ShiftBaseline& baseline) {
  const ShiftData& sd = ex.shifts.at(shift_id);
  if (!baseline.error.empty()) return failed_report(ex, shift_id, intervention, baseline.error);
  EvalReport r;
  r.shift = shift_id;
  r.intervention = intervention;
  r.model_id = ex.model_id;
  r.z = baseline.z;
  r.ttc = baseline.capability.ttc;
  r.i_best = baseline.capability.i_best;
  try {
    if (intervention == "zero_shot") {
      r.verdicts = baseline.zero_shot;
    } else {
      const std::uint64_t seed = cell_seed(ex.config.seed, shift_id, intervention);
      Evaluation e = evaluate_isolated(
          fit_intervention(ex.model, intervention, sd.source, ex.config, seed), sd.target,
          ex.config.isolation_sample, seed);
      r.verdicts = std::move(e.verdicts);
      r.skipped = std::move(e.skipped);
    }
    if (r.verdicts.empty()) {
      EvalReport f = failed_report(ex, shift_id, intervention, "no target example could be scored");
      f.skipped = std::move(r.skipped);
      return f;
    }
    eval::finalize_report(r);
  } catch (const FitFailure& e) {
    return failed_report(ex, shift_id, intervention, e.what());
  } catch (const NumericError& e) {
    return failed_report(ex, shift_id, intervention, e.what());
  } catch (const ContractViolation& e) {
    return failed_report(ex, shift_id, intervention, e.what());
  }
  return r;
}

Leaderboard build_leaderboard(const std::vector<EvalReport>& reports,
                              const data::Registry& registry) {
  Leaderboard board;
  std::map<std::string, std::size_t> row_of;
  std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> cat;
  std::map<std::string, double> ceiling;
  for (const auto& r : reports) {
    if (!row_of.count(r.intervention)) {
      row_of[r.intervention] = board.rows.size();
      board.rows.push_back({});
      board.rows.back().intervention = r.intervention;
    }
    LeaderboardRow& row = board.rows[row_of[r.intervention]];
    if (r.status != "ok") {
      row.failed += 1;
      continue;
    }
    row.completed += 1;
    row.avg_de += r.de;
    row.avg_rms += r.rms_err;
    row.avg_s += r.s;
    auto& [sum, n] = cat[r.intervention][registry.shift(r.shift).category];
    sum += r.de;
    n += 1;
    if (!ceiling.count(r.shift)) ceiling[r.shift] = (r.ttc - r.z) / r.ttc;
  }
  for (auto& row : board.rows) {
    if (row.completed == 0) continue;
    const double n = static_cast<double>(row.completed);
    row.avg_de /= n;
    row.avg_rms /= n;
    row.avg_s /= n;
    for (const auto& [category, acc] : cat[row.intervention])
      row.category_de[category] = acc.first / static_cast<double>(acc.second);
  }
  std::stable_sort(board.rows.begin(), board.rows.end(),
                   [](const LeaderboardRow& a, const LeaderboardRow& b) {
                     if ((a.completed > 0) != (b.completed > 0)) return a.completed > 0;
                     return a.avg_de > b.avg_de;
                   });
  for (const auto& [_, v] : ceiling) board.ceiling_de += v;
  if (!ceiling.empty()) board.ceiling_de /= static_cast<double>(ceiling.size());
  return board;
}

std::string leaderboard_to_jsonl(const Leaderboard& board) {
  std::string out;
  for (const auto& row : board.rows) {
    nlohmann::ordered_json j;
    j["intervention"] = row.intervention;
    j["avg_de"] = row.avg_de;
    j["avg_rms_err"] = row.avg_rms;
    j["avg_s"] = row.avg_s;
    j["category_de"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : row.category_de) j["category_de"][k] = v;
    j["completed"] = row.completed;
    j["failed"] = row.failed;
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json ceiling;
  ceiling["intervention"] = "ceiling";
  ceiling["avg_de"] = board.ceiling_de;
  return out + ceiling.dump() + "\n";
}

std::string leaderboard_table(const Leaderboard& board) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %9s %9s %9s %5s %6s\n", "intervention", "avg_DE",
                "avg_RMS", "avg_S", "done", "failed");
  out << line;
  for (const auto& row : board.rows) {
    std::snprintf(line, sizeof line, "%-16s %9.4f %9.4f %9.4f %5zu %6zu\n",
                  row.intervention.c_str(), row.avg_de, row.avg_rms, row.avg_s, row.completed,
                  row.failed);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-16s %9.4f\n", "ceiling", board.ceiling_de);
  out << line;
  return out.str();
}

MatrixResult run_matrix(const Experiment& ex) {
  const auto& shifts = ex.config.shifts;
  const auto& interventions = ex.config.interventions;
  std::vector<ShiftBaseline> baselines(shifts.size());
  parallel_for(shifts.size(), ex.config.threads,
               [&](std::size_t i) { baselines[i] = shift_baseline(ex, shifts[i]); });
  MatrixResult result;
  result.reports.resize(shifts.size() * interventions.size());
  parallel_for(result.reports.size(), ex.config.threads, [&](std::size_t k) {
    const std::size_t s = k / interventions.size(), i = k % interventions.size();
    result.reports[k] = run_cell(ex, shifts[s], interventions[i], baselines[s]);
  });
  result.leaderboard = build_leaderboard(result.reports, ex.registry);
  return result;
}

void write_matrix(const MatrixResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::string lines;
  for (const auto& r : result.reports) lines += eval::report_to_json(r) + "\n";
  write_text(std::filesystem::path(dir) / "reports.jsonl", lines);
  write_text(std::filesystem::path(dir) / "leaderboard.jsonl",
             leaderboard_to_jsonl(result.leaderboard));
  write_text(std::filesystem::path(dir) / "leaderboard.txt", leaderboard_table(result.leaderboard));
}

SweepResult mixture_sweep(const Experiment& ex, const std::string& shift_id,
                          const ShiftBaseline& baseline) {
  const ShiftData& sd = ex.shifts.at(shift_id);
  const ExperimentConfig& c = ex.config;
  const std::uint64_t seed = cell_seed(c.seed, shift_id, "lora");
  SweepResult out;
  for (double ratio : c.mixture_ratios) {
    const std::string label = "lora@" + ratio_label(ratio);
    if (!baseline.error.empty()) {
      out.reports.push_back(failed_report(ex, shift_id, label, baseline.error));
      continue;
    }
    const std::vector<PreferenceExample> source =
        ratio == 0.0 ? sd.source
                     : data::mix_datasets(sd.source, sd.target_train, ratio,
                                          derive_seed(seed, "mix/" + ratio_label(ratio)))
                           .examples;
    std::vector<CurvePoint> points;
    try {
      const train::TuneResult t =
          tune_lora(ex.model, source, c, seed, [&](std::size_t step, const RewardModel& m) {
            std::vector<PolicyVerdict> v;
            for (const auto& e : sd.target) v.push_back(eval::reward_classify(m, e));
            points.push_back({ratio, step, 0.0, eval::accuracy(v)});
          });
      for (std::size_t i = 0; i < points.size(); ++i)
        points[i].eval_loss = t.checkpoints[i].eval_loss;
      EvalReport r;
      r.shift = shift_id;
      r.intervention = label;
      r.model_id = ex.model_id;
      r.z = baseline.z;
      r.ttc = baseline.capability.ttc;
      r.i_best = baseline.capability.i_best;
      Evaluation e = evaluate_isolated(reward_classifier(t.model), sd.target, c.isolation_sample,
                                       seed);
      r.verdicts = std::move(e.verdicts);
      eval::finalize_report(r);
      out.reports.push_back(std::move(r));
    } catch (const FitFailure& e) {
      out.reports.push_back(failed_report(ex, shift_id, label, e.what()));
    } catch (const NumericError& e) {
      out.reports.push_back(failed_report(ex, shift_id, label, e.what()));
    }
    out.curve.insert(out.curve.end(), points.begin(), points.end());
  }
  return out;
}

void write_sweep(const SweepResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::string lines;
  for (const auto& r : result.reports) lines += eval::report_to_json(r) + "\n";
  write_text(std::filesystem::path(dir) / "sweep_reports.jsonl", lines);
  std::string csv = "ratio,step,eval_loss,target_accuracy\n";
  char buf[160];
  for (const auto& p : result.curve) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%.17g\n", ratio_label(p.ratio).c_str(), p.step,
                  p.eval_loss, p.target_accuracy);
    csv += buf;
  }
  write_text(std::filesystem::path(dir) / "sweep_curve.csv", csv);
  std::string summary;
  const EvalReport* lo = nullptr;
  const EvalReport* hi = nullptr;
  for (const auto& r : result.reports) {
    if (r.status != "ok") continue;
    if (!lo) lo = &r;
    hi = &r;
  }
  if (lo && hi && lo != hi) {
    std::snprintf(buf, sizeof buf, "target accuracy %s: %.4f, %s: %.4f, change %+.4f\n",
                  lo->intervention.c_str(), lo->s, hi->intervention.c_str(), hi->s, hi->s - lo->s);
    summary = buf;
  } else {
    summary = "fewer than two completed ratios\n";
  }
  write_text(std::filesystem::path(dir) / "sweep_summary.txt", summary);
}

std::optional<double> correlate(const std::vector<EvalReport>& a,
                                const std::vector<EvalReport>& b) {
  std::map<std::string, double> bs;
  for (const auto& r : b)
    if (r.status == "ok") {
      require(!bs.count(r.shift), "correlate: duplicate shift " + r.shift);
      bs[r.shift] = r.s;
    }
  std::vector<double> x, y;
  std::map<std::string, bool> seen;
  for (const auto& r : a) {
    if (r.status != "ok") continue;
    require(!seen[r.shift], "correlate: duplicate shift " + r.shift);
    seen[r.shift] = true;
    const auto it = bs.find(r.shift);
    if (it == bs.end()) continue;
    x.push_back(r.s);
    y.push_back(it->second);
  }
  require(x.size() >= 3, "correlate: need at least three matched cells");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<EvalReport> read_reports(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractViolation("cannot read reports " + path);
  std::vector<EvalReport> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(eval::report_from_json(line));
    } catch (const ParseError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

}  // namespace rmgen::harness
