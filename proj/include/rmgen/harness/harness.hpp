#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rmgen/data/registry.hpp"
#include "rmgen/eval/metrics.hpp"
#include "rmgen/eval/report.hpp"
#include "rmgen/harness/config.hpp"

namespace rmgen::harness {

// Classifies one example; nullopt marks an example the policy cannot score
// (few-shot context overflow).
using Classifier = std::function<std::optional<eval::PolicyVerdict>(const data::PreferenceExample&)>;

// Fits `intervention` on `source` only. Throws FitFailure or
// ContractViolation when the fit is impossible.
Classifier fit_intervention(const model::RewardModel& base, const std::string& intervention,
                            const std::vector<data::PreferenceExample>& source,
                            const ExperimentConfig& config, std::uint64_t seed);

struct Evaluation {
  std::vector<eval::PolicyVerdict> verdicts;
  std::vector<eval::SkippedExample> skipped;
};

// Classifies each example on its own. A seeded sample of `isolation_sample`
// examples is classified again in shuffled order; any changed verdict
// throws std::logic_error.
Evaluation evaluate_isolated(const Classifier& classify,
                             const std::vector<data::PreferenceExample>& examples,
                             std::size_t isolation_sample, std::uint64_t seed);

struct ShiftData {
  data::ShiftSpec spec;
  std::vector<data::PreferenceExample> source;           // source train split
  std::vector<data::PreferenceExample> target;           // target eval split
  std::vector<data::PreferenceExample> target_train;     // mixing pool
  std::vector<data::PreferenceExample> reference_train;  // at most ttc_budget
  std::vector<data::PreferenceExample> reference_eval;
};

struct ShiftBaseline {
  std::vector<eval::PolicyVerdict> zero_shot;
  double z = 0.0;
  eval::Capability capability;
  std::vector<eval::CandidateScore> candidates;
  std::string error;  // non-empty when no capability could be measured
};

// Shared state of one experiment: the pretrained model and the datasets.
struct Experiment {
  ExperimentConfig config;
  data::Registry registry;
  model::RewardModel model;
  std::string model_id;
  std::map<std::string, ShiftData> shifts;
};

model::RewardModel prepare_model(const ExperimentConfig& config);
Experiment prepare_experiment(const ExperimentConfig& config);
Experiment prepare_experiment(const ExperimentConfig& config, model::RewardModel model);
ShiftData load_shift(const data::Registry& registry, const std::string& shift_id,
                     std::size_t ttc_budget);

// Zero-shot accuracy on the target and the target-tuned capability: each
// candidate fitted on reference train and scored on reference eval.
ShiftBaseline shift_baseline(const Experiment& ex, const std::string& shift_id);

eval::EvalReport run_cell(const Experiment& ex, const std::string& shift_id,
                          const std::string& intervention, const ShiftBaseline& baseline);

struct LeaderboardRow {
  std::string intervention;
  double avg_de = 0.0;
  double avg_rms = 0.0;
  double avg_s = 0.0;
  std::map<std::string, double> category_de;
  std::size_t completed = 0;
  std::size_t failed = 0;
};

struct Leaderboard {
  std::vector<LeaderboardRow> rows;  // by avg DE, descending
  // Mean over shifts of (TtC - Z) / TtC.
  double ceiling_de = 0.0;
};

Leaderboard build_leaderboard(const std::vector<eval::EvalReport>& reports,
                              const data::Registry& registry);
std::string leaderboard_to_jsonl(const Leaderboard& board);
std::string leaderboard_table(const Leaderboard& board);

struct MatrixResult {
  std::vector<eval::EvalReport> reports;  // shift-major, config order
  Leaderboard leaderboard;
};

// Runs every (shift, intervention) cell on `threads` workers. Failed cells
// are recorded and never abort the matrix.
MatrixResult run_matrix(const Experiment& ex);
// reports.jsonl, leaderboard.jsonl and leaderboard.txt under `dir`.
void write_matrix(const MatrixResult& result, const std::string& dir);

struct CurvePoint {
  double ratio = 0.0;
  std::size_t step = 0;
  double eval_loss = 0.0;
  double target_accuracy = 0.0;
};

struct SweepResult {
  std::vector<eval::EvalReport> reports;  // one per ratio, intervention "lora@<ratio>"
  std::vector<CurvePoint> curve;
};

// LoRA tuned on the source with a share of target-train examples mixed in.
// Ratio 0 uses the source unchanged, so it matches the plain LoRA cell.
SweepResult mixture_sweep(const Experiment& ex, const std::string& shift_id,
                          const ShiftBaseline& baseline);
void write_sweep(const SweepResult& result, const std::string& dir);

// Pearson r of per-cell accuracy over cells matched by shift id; nullopt
// when either side has zero variance. Throws ContractViolation on fewer
// than three matches.
std::optional<double> correlate(const std::vector<eval::EvalReport>& a,
                                const std::vector<eval::EvalReport>& b);

std::vector<eval::EvalReport> read_reports(const std::string& path);

// Seed of the stream for one cell.
std::uint64_t cell_seed(std::uint64_t global, const std::string& shift,
                        const std::string& intervention);

// Runs tasks 0..n-1 on `threads` workers; the first exception is rethrown
// after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& task);

}  // namespace rmgen::harness
