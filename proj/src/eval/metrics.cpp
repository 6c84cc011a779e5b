#include "rmgen/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rmgen/common/error.hpp"

namespace rmgen::eval {

double accuracy(const std::vector<PolicyVerdict>& verdicts) {
  require(!verdicts.empty(), "accuracy: no verdicts");
  std::size_t right = 0;
  for (const auto& v : verdicts) right += v.correct ? 1 : 0;
  return static_cast<double>(right) / static_cast<double>(verdicts.size());
}

double elicitation(double s, double ttc) {
  require(ttc > 0.0 && ttc <= 1.0, "elicitation: TtC must lie in (0, 1]");
  return s / ttc;
}

double differential_elicitation(double s, double z, double ttc) {
  require(ttc > 0.0 && ttc <= 1.0, "differential_elicitation: TtC must lie in (0, 1]");
  return (s - z) / ttc;
}

namespace {

// Neumaier-compensated sum, so that a bin whose probabilities equal its
// accuracy reproduces the integer count exactly.
struct CompensatedSum {
  double sum = 0.0, carry = 0.0;
  void add(double x) {
    const double t = sum + x;
    carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + carry; }
};

struct BinSums {
  std::size_t count = 0;
  std::size_t right = 0;
  CompensatedSum p;
};

std::vector<BinSums> bin_sums(const std::vector<PolicyVerdict>& verdicts) {
  std::vector<BinSums> bins(kCalibrationBins);
  const auto b = static_cast<double>(kCalibrationBins);
  for (const auto& v : verdicts) {
    require(v.probability >= 0.0 && v.probability <= 1.0,
            "calibration: probability outside [0, 1] for " + v.example_id);
    const double pos = std::floor(v.probability * 2.0 * b) - b;
    const auto i = static_cast<std::size_t>(std::clamp(pos, 0.0, b - 1.0));
    bins[i].count += 1;
    bins[i].right += v.correct ? 1 : 0;
    bins[i].p.add(v.probability);
  }
  return bins;
}

}  // namespace

std::vector<CalibrationBin> calibration_bins(const std::vector<PolicyVerdict>& verdicts) {
  const auto sums = bin_sums(verdicts);
  std::vector<CalibrationBin> bins(kCalibrationBins);
  for (std::size_t i = 0; i < kCalibrationBins; ++i) {
    bins[i].index = i;
    bins[i].count = sums[i].count;
    if (sums[i].count == 0) continue;
    const double n = static_cast<double>(sums[i].count);
    bins[i].mean_probability = sums[i].p.value() / n;
    bins[i].accuracy = static_cast<double>(sums[i].right) / n;
  }
  return bins;
}

double rms_calibration_error(const std::vector<PolicyVerdict>& verdicts) {
  double total = 0.0;
  for (const auto& bin : bin_sums(verdicts)) {
    if (bin.count == 0) continue;
    const double n = static_cast<double>(bin.count);
    const double gap = bin.p.value() - static_cast<double>(bin.right);
    total += gap * gap / (static_cast<double>(kCalibrationBins) * n * n);
  }
  return std::sqrt(total);
}

double mistake_overlap(const std::vector<PolicyVerdict>& a, const std::vector<PolicyVerdict>& b) {
  require(a.size() == b.size(), "mistake_overlap: verdict lists differ in length");
  std::map<std::string, bool> b_wrong;
  for (const auto& v : b) b_wrong[v.example_id] = !v.correct;
  require(b_wrong.size() == b.size(), "mistake_overlap: duplicate example ids");
  std::size_t both = 0, either = 0;
  for (const auto& v : a) {
    const auto it = b_wrong.find(v.example_id);
    require(it != b_wrong.end(), "mistake_overlap: unmatched example id " + v.example_id);
    const bool wa = !v.correct, wb = it->second;
    both += wa && wb;
    either += wa || wb;
  }
  if (either == 0) return 1.0;
  return static_cast<double>(both) / static_cast<double>(either);
}

Capability best_capability(const std::vector<CandidateScore>& candidates) {
  require(!candidates.empty(), "best_capability: no candidates");
  Capability best{candidates[0].accuracy, candidates[0].intervention};
  for (const auto& c : candidates)
    if (c.accuracy > best.ttc) best = {c.accuracy, c.intervention};
  return best;
}

const std::vector<std::string>& ttc_catalog() {
  static const std::vector<std::string> catalog{"lora", "mms", "lat1", "lat2",
                                                "cra", "ccs", "prompt_tuning"};
  return catalog;
}

}  // namespace rmgen::eval
