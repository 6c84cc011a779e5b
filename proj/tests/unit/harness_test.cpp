#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gtest/gtest.h"
#include "rmgen/common/error.hpp"
#include "rmgen/common/rng.hpp"
#include "rmgen/harness/harness.hpp"

namespace rmgen::harness {
namespace {

namespace fs = std::filesystem;
using eval::EvalReport;

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.model.n_layers = 2;
  c.model.n_heads = 2;
  c.model.model_dim = 16;
  c.model.ff_dim = 32;
  c.pretrain_steps = 0;
  c.shifts = {"arithmetic_difficulty", "sycophancy", "length"};
  c.interventions = {"zero_shot", "lora", "mms", "random"};
  c.ttc_candidates = {"lora", "mms"};
  c.sizes = {24, 8};
  c.ttc_budget = 20;
  c.tune_steps = 4;
  c.checkpoint_every = 2;
  c.batch_size = 4;
  c.ccs_restarts = 2;
  c.ccs_iterations = 50;
  c.isolation_sample = 4;
  c.seed = 5;
  return c;
}

const Experiment& tiny_experiment() {
  static const Experiment ex = prepare_experiment(tiny_config());
  return ex;
}

const MatrixResult& tiny_matrix() {
  static const MatrixResult m = run_matrix(tiny_experiment());
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EvalReport report_with(const std::string& shift, double s) {
  EvalReport r;
  r.shift = shift;
  r.intervention = "x";
  r.s = s;
  return r;
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = tiny_config();
  c.threads = 3;
  c.mixture_ratios = {0.0, 0.5};
  const std::string text = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(text)), text);
}

TEST(Config, DefaultsFollowThePaperProtocol) {
  const ExperimentConfig c;
  EXPECT_EQ(c.interventions.size(), 10u);
  EXPECT_EQ(c.ttc_budget, 650u);
  EXPECT_EQ(c.few_shots, 5u);
  EXPECT_EQ(c.mixture_ratios, (std::vector<double>{0.0, 0.01, 0.05, 0.10, 0.35}));
}

TEST(Config, RejectsUnknownKeysAndValues) {
  EXPECT_THROW(config_from_json("{\"sede\": 1}"), ParseError);
  EXPECT_THROW(config_from_json("{\"interventions\": [\"telepathy\"]}"), ParseError);
  EXPECT_THROW(config_from_json("{\"seed\": \"seven\"}"), ParseError);
  EXPECT_THROW(config_from_json("{\"model\": {\"depth\": 2}}"), ParseError);
  EXPECT_THROW(config_from_json("{\"tune_steps\": 10, \"checkpoint_every\": 3}"), ParseError);
  EXPECT_THROW(config_from_json("[1, 2]"), ParseError);
  EXPECT_EQ(config_from_json("{\"seed\": 7}").seed, 7u);
}

TEST(Config, EnvironmentOverridesOutputDirOnly) {
  ExperimentConfig c = tiny_config();
  ::setenv("RMGEN_OUTPUT_DIR", "/tmp/rmgen_env_dir", 1);
  apply_environment(c);
  ::unsetenv("RMGEN_OUTPUT_DIR");
  EXPECT_EQ(c.output_dir, "/tmp/rmgen_env_dir");
  EXPECT_EQ(c.seed, 5u);
}

TEST(Parallel, CoversEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> hits(50);
  parallel_for(50, 4, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw FitFailure("boom");
                            }),
               FitFailure);
}

TEST(Seeds, CellStreamsAreDistinct) {
  EXPECT_NE(cell_seed(1, "a", "lora"), cell_seed(1, "a", "mms"));
  EXPECT_NE(cell_seed(1, "a", "lora"), cell_seed(1, "b", "lora"));
  EXPECT_NE(cell_seed(1, "a", "lora"), cell_seed(2, "a", "lora"));
  EXPECT_EQ(cell_seed(1, "a", "lora"), cell_seed(1, "a", "lora"));
}

TEST(Isolation, ReversedOrderGivesIdenticalVerdicts) {
  const Experiment& ex = tiny_experiment();
  const ShiftData& sd = ex.shifts.at("arithmetic_difficulty");
  const Classifier f = fit_intervention(ex.model, "mms", sd.source, ex.config, 3);
  const Evaluation forward = evaluate_isolated(f, sd.target, 0, 1);
  auto reversed = sd.target;
  std::reverse(reversed.begin(), reversed.end());
  Evaluation backward = evaluate_isolated(f, reversed, 0, 1);
  std::reverse(backward.verdicts.begin(), backward.verdicts.end());
  ASSERT_EQ(forward.verdicts.size(), backward.verdicts.size());
  for (std::size_t i = 0; i < forward.verdicts.size(); ++i) {
    EXPECT_EQ(forward.verdicts[i].example_id, backward.verdicts[i].example_id);
    EXPECT_EQ(forward.verdicts[i].probability, backward.verdicts[i].probability);
    EXPECT_EQ(forward.verdicts[i].correct, backward.verdicts[i].correct);
  }
}

TEST(Isolation, StatefulClassifierIsCaught) {
  const auto& target = tiny_experiment().shifts.at("arithmetic_difficulty").target;
  auto calls = std::make_shared<int>(0);
  const Classifier leaky = [calls](const data::PreferenceExample& e) {
    return eval::verdict_from_margin(e.id, (*calls)++ % 2 ? 1.0 : -1.0, 0.7);
  };
  EXPECT_THROW(evaluate_isolated(leaky, target, 4, 1), std::logic_error);
}

TEST(Matrix, OneReportPerCellAndConsistent) {
  const MatrixResult& m = tiny_matrix();
  ASSERT_EQ(m.reports.size(), 12u);
  for (const auto& r : m.reports) {
    EXPECT_EQ(r.status, "ok") << r.shift << "/" << r.intervention << ": " << r.error;
    EXPECT_TRUE(eval::report_consistent(r));
    EXPECT_EQ(r.el, eval::accuracy(r.verdicts) / r.ttc);
    EXPECT_EQ(r.verdicts.size(), 8u);
    if (r.intervention == "zero_shot") {
      EXPECT_EQ(r.de, 0.0);
    }
  }
  for (const auto& row : m.leaderboard.rows) {
    if (row.intervention == "zero_shot") {
      EXPECT_EQ(row.avg_de, 0.0);
    }
  }
}

TEST(Matrix, LeaderboardRecomputesFromPersistedReports) {
  const MatrixResult& m = tiny_matrix();
  const fs::path dir = fs::temp_directory_path() / "rmgen_matrix_persist";
  fs::remove_all(dir);
  write_matrix(m, dir.string());
  const auto back = read_reports((dir / "reports.jsonl").string());
  ASSERT_EQ(back.size(), m.reports.size());
  const Leaderboard again = build_leaderboard(back, tiny_experiment().registry);
  EXPECT_EQ(leaderboard_to_jsonl(again), leaderboard_to_jsonl(m.leaderboard));
  EXPECT_EQ(slurp(dir / "leaderboard.jsonl"), leaderboard_to_jsonl(m.leaderboard));
  for (std::size_t i = 1; i < m.leaderboard.rows.size(); ++i)
    EXPECT_GE(m.leaderboard.rows[i - 1].avg_de, m.leaderboard.rows[i].avg_de);
  fs::remove_all(dir);
}

TEST(Matrix, RerunAndThreadCountReproduceBytes) {
  ExperimentConfig c = tiny_config();
  c.shifts = {"length"};
  c.threads = 2;
  const Experiment ex = prepare_experiment(c);
  const MatrixResult again = run_matrix(ex);
  const MatrixResult& first = tiny_matrix();
  for (const auto& r : again.reports) {
    const auto it = std::find_if(first.reports.begin(), first.reports.end(), [&](const auto& o) {
      return o.shift == r.shift && o.intervention == r.intervention;
    });
    ASSERT_NE(it, first.reports.end());
    EXPECT_EQ(eval::report_to_json(*it), eval::report_to_json(r));
  }
}

TEST(Matrix, CeilingUsesEachShiftOnce) {
  const MatrixResult& m = tiny_matrix();
  std::map<std::string, double> per_shift;
  for (const auto& r : m.reports) per_shift[r.shift] = (r.ttc - r.z) / r.ttc;
  double expected = 0;
  for (const auto& [_, v] : per_shift) expected += v / per_shift.size();
  EXPECT_NEAR(m.leaderboard.ceiling_de, expected, 1e-15);
}

TEST(Matrix, FailedBaselineFailsTheCellWithoutThrowing) {
  ShiftBaseline broken;
  broken.error = "no capability candidate could be fitted";
  const EvalReport r = run_cell(tiny_experiment(), "length", "lora", broken);
  EXPECT_EQ(r.status, "failed");
  EXPECT_EQ(r.error, broken.error);
  std::vector<EvalReport> reports = tiny_matrix().reports;
  reports.push_back(r);
  const Leaderboard board = build_leaderboard(reports, tiny_experiment().registry);
  for (const auto& row : board.rows) {
    if (row.intervention == "lora") {
      EXPECT_EQ(row.failed, 1u);
    }
  }
}

TEST(Capability, CandidatesAreScoredOnReferenceData) {
  const ShiftBaseline b = shift_baseline(tiny_experiment(), "sycophancy");
  ASSERT_TRUE(b.error.empty()) << b.error;
  ASSERT_EQ(b.candidates.size(), 2u);
  EXPECT_EQ(b.capability.ttc, std::max(b.candidates[0].accuracy, b.candidates[1].accuracy));
  EXPECT_LE(b.capability.ttc, 1.0);
}

TEST(Sweep, RatioZeroMatchesThePlainLoraCell) {
  ExperimentConfig c = tiny_config();
  c.mixture_ratios = {0.0, 0.35};
  const Experiment ex = prepare_experiment(c, tiny_experiment().model);
  const ShiftBaseline b = shift_baseline(ex, "sycophancy");
  const SweepResult s = mixture_sweep(ex, "sycophancy", b);
  ASSERT_EQ(s.reports.size(), 2u);
  EXPECT_EQ(s.reports[0].intervention, "lora@0.00");
  EXPECT_EQ(s.reports[1].intervention, "lora@0.35");
  EXPECT_EQ(s.curve.size(), 4u);
  const EvalReport plain = run_cell(ex, "sycophancy", "lora", b);
  ASSERT_EQ(plain.verdicts.size(), s.reports[0].verdicts.size());
  for (std::size_t i = 0; i < plain.verdicts.size(); ++i)
    EXPECT_EQ(plain.verdicts[i].probability, s.reports[0].verdicts[i].probability);
  EXPECT_EQ(plain.s, s.reports[0].s);
}

TEST(Correlate, PearsonAgainstTwoPassOracle) {
  std::vector<EvalReport> a, b, neg;
  Rng rng(3);
  std::vector<double> x, y;
  for (int i = 0; i < 12; ++i) {
    x.push_back(rng.uniform());
    y.push_back(0.3 * x.back() + rng.uniform());
    a.push_back(report_with("s" + std::to_string(i), x.back()));
    b.push_back(report_with("s" + std::to_string(i), y.back()));
    neg.push_back(report_with("s" + std::to_string(i), -x.back()));
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    dx += (x[i] - mx) * (x[i] - mx);
    dy += (y[i] - my) * (y[i] - my);
  }
  EXPECT_NEAR(*correlate(a, b), num / std::sqrt(dx * dy), 1e-12);
  EXPECT_NEAR(*correlate(a, a), 1.0, 1e-12);
  EXPECT_NEAR(*correlate(a, neg), -1.0, 1e-12);
}

TEST(Correlate, DegenerateInputs) {
  std::vector<EvalReport> flat, varied;
  for (int i = 0; i < 4; ++i) {
    flat.push_back(report_with("s" + std::to_string(i), 0.5));
    varied.push_back(report_with("s" + std::to_string(i), 0.1 * i));
  }
  EXPECT_FALSE(correlate(flat, varied).has_value());
  varied.resize(2);
  EXPECT_THROW(correlate(flat, varied), ContractViolation);
}

TEST(Reports, ParseErrorsNameTheLine) {
  const fs::path p = fs::temp_directory_path() / "rmgen_bad_reports.jsonl";
  {
    std::ofstream out(p);
    out << eval::report_to_json(tiny_matrix().reports[0]) << "\n{oops\n";
  }
  try {
    read_reports(p.string());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  fs::remove(p);
}

}  // namespace
}  // namespace rmgen::harness
