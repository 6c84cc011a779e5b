#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "rmgen/common/error.hpp"
#include "rmgen/common/rng.hpp"
#include "rmgen/data/corpus.hpp"
#include "rmgen/harness/harness.hpp"
#include "rmgen/model/checkpoint.hpp"
#include "rmgen/training/training.hpp"

namespace fs = std::filesystem;
using namespace rmgen;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* opt = cmd->add_option("--config,-c", f.config, "experiment config (JSON)");
  if (config_required) opt->required();
  opt->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "override the global seed");
  cmd->add_option("--out,-o", f.out, "output directory");
  cmd->add_option("--threads,-j", f.threads, "worker threads")->check(CLI::PositiveNumber);
}

harness::ExperimentConfig load(const CommonFlags& f) {
  harness::ExperimentConfig c;
  if (!f.config.empty()) c = harness::read_config(f.config);
  else harness::apply_environment(c);
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.threads) c.threads = *f.threads;
  c.validate();
  return c;
}

void print_report(const eval::EvalReport& r) {
  if (r.status != "ok") {
    std::cout << r.shift << " / " << r.intervention << ": failed (" << r.error << ")\n";
    return;
  }
  std::printf("%s / %s: S=%.4f Z=%.4f TtC=%.4f (%s) El=%.4f DE=%.4f RMS=%.4f\n",
              r.shift.c_str(), r.intervention.c_str(), r.s, r.z, r.ttc, r.i_best.c_str(), r.el,
              r.de, r.rms_err);
}

int gen_data(const CommonFlags& f, const std::string& only) {
  const harness::ExperimentConfig c = load(f);
  const data::Registry reg = c.registry.empty() ? data::default_registry(c.seed, c.sizes)
                                                : data::read_registry(c.registry);
  fs::create_directories(c.output_dir);
  std::size_t written = 0;
  for (const auto& spec : reg.datasets) {
    if (!only.empty() && spec.id != only) continue;
    data::write_dataset(data::generate(spec), (fs::path(c.output_dir) / (spec.id + ".jsonl")).string());
    ++written;
  }
  if (!only.empty() && written == 0) throw ContractViolation("unknown dataset '" + only + "'");
  data::write_registry(reg, (fs::path(c.output_dir) / "registry.json").string());
  std::cout << "wrote " << written << " dataset(s) to " << c.output_dir << "\n";
  return 0;
}

int pretrain(const CommonFlags& f) {
  harness::ExperimentConfig c = load(f);
  c.checkpoint.clear();
  const auto start = std::chrono::steady_clock::now();
  model::RewardModel base = model::build_model(c.model);
  data::CorpusConfig cc;
  cc.min_tokens = c.corpus_tokens;
  cc.context_len = c.model.context_len;
  const data::Corpus corpus = data::build_pretrain_corpus(derive_seed(c.seed, "corpus"), cc);
  train::PretrainConfig pc;
  pc.max_steps = c.pretrain_steps;
  pc.log_every = std::max<std::size_t>(1, c.pretrain_steps / 20);
  pc.seed = derive_seed(c.seed, "pretrain");
  const train::PretrainResult r = train::pretrain_lm(base, corpus, pc);
  fs::create_directories(c.output_dir);
  model::save_checkpoint(r.model, (fs::path(c.output_dir) / "model.ckpt").string());
  train::write_metrics(r.history, (fs::path(c.output_dir) / "pretrain_metrics.csv").string());
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("held-out loss %.4f -> %.4f over %zu steps\n", r.initial_heldout_loss,
              r.final_heldout_loss, pc.max_steps);
  std::fprintf(stderr, "pretraining took %.1f s\n", secs);
  return 0;
}

int run_cell(const CommonFlags& f, const std::string& shift, const std::string& intervention) {
  harness::ExperimentConfig c = load(f);
  c.shifts = {shift};
  c.interventions = {intervention};
  c.validate();
  const harness::Experiment ex = harness::prepare_experiment(c);
  const harness::ShiftBaseline b = harness::shift_baseline(ex, shift);
  const eval::EvalReport r = harness::run_cell(ex, shift, intervention, b);
  fs::create_directories(c.output_dir);
  std::ofstream out(fs::path(c.output_dir) / ("cell_" + shift + "__" + intervention + ".json"),
                    std::ios::binary | std::ios::trunc);
  out << eval::report_to_json(r) << "\n";
  print_report(r);
  return 0;
}

int run_matrix(const CommonFlags& f) {
  const harness::ExperimentConfig c = load(f);
  const harness::Experiment ex = harness::prepare_experiment(c);
  const harness::MatrixResult m = harness::run_matrix(ex);
  harness::write_matrix(m, c.output_dir);
  std::cout << harness::leaderboard_table(m.leaderboard);
  return 0;
}

int mixture_sweep(const CommonFlags& f, const std::string& shift) {
  harness::ExperimentConfig c = load(f);
  c.shifts = {shift};
  const harness::Experiment ex = harness::prepare_experiment(c);
  const harness::ShiftBaseline b = harness::shift_baseline(ex, shift);
  const harness::SweepResult s = harness::mixture_sweep(ex, shift, b);
  harness::write_sweep(s, c.output_dir);
  for (const auto& r : s.reports) print_report(r);
  return 0;
}

int report(const std::string& reports, const std::string& against, const CommonFlags& f) {
  const harness::ExperimentConfig c = load(f);
  const data::Registry reg = c.registry.empty() ? data::default_registry(c.seed, c.sizes)
                                                : data::read_registry(c.registry);
  const auto a = harness::read_reports(reports);
  for (const auto& r : a) print_report(r);
  std::cout << "\n" << harness::leaderboard_table(harness::build_leaderboard(a, reg));
  if (!against.empty()) {
    const auto r = harness::correlate(a, harness::read_reports(against));
    if (r) std::printf("pearson r = %.4f\n", *r);
    else std::printf("pearson r undefined (zero variance)\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-model generalization testbed"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string only, shift, intervention, reports, against;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic datasets");
  add_common(gen, flags, false);
  gen->add_option("--only", only, "generate a single dataset id");

  auto* pre = app.add_subcommand("pretrain", "pretrain the language model");
  add_common(pre, flags, true);

  auto* cell = app.add_subcommand("run-cell", "run one shift x intervention cell");
  add_common(cell, flags, true);
  cell->add_option("--shift", shift)->required();
  cell->add_option("--intervention", intervention)->required();

  auto* matrix = app.add_subcommand("run-matrix", "run the full experiment matrix");
  add_common(matrix, flags, true);

  auto* sweep = app.add_subcommand("mixture-sweep", "LoRA under source/target mixtures");
  add_common(sweep, flags, true);
  sweep->add_option("--shift", shift)->required();

  auto* rep = app.add_subcommand("report", "summarise a reports file");
  add_common(rep, flags, false);
  rep->add_option("--reports", reports)->required()->check(CLI::ExistingFile);
  rep->add_option("--against", against, "second reports file to correlate with")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*gen) return gen_data(flags, only);
    if (*pre) return pretrain(flags);
    if (*cell) return run_cell(flags, shift, intervention);
    if (*matrix) return run_matrix(flags);
    if (*sweep) return mixture_sweep(flags, shift);
    if (*rep) return report(reports, against, flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
