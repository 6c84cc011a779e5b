#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rmgen/eval/policies.hpp"

namespace rmgen::eval {

// Mean of the correct flags. Throws ContractViolation when empty.
double accuracy(const std::vector<PolicyVerdict>& verdicts);

// S / TtC and (S - Z) / TtC. Throw ContractViolation unless 0 < TtC <= 1.
double elicitation(double s, double ttc);
double differential_elicitation(double s, double z, double ttc);

inline constexpr std::size_t kCalibrationBins = 5;

struct CalibrationBin {
  std::size_t index = 0;
  std::size_t count = 0;
  double mean_probability = 0.0;
  double accuracy = 0.0;
};

// Equal-width bins over [0.5, 1]; a chosen probability below 0.5 falls in
// the first bin. Throws ContractViolation for probabilities outside [0, 1].
std::vector<CalibrationBin> calibration_bins(const std::vector<PolicyVerdict>& verdicts);
// sqrt(sum_i (sum p - sum correct)^2 / (b |B_i|^2)) over nonempty bins.
double rms_calibration_error(const std::vector<PolicyVerdict>& verdicts);

// |both wrong| / |either wrong| over verdicts aligned by example id; 1 when
// neither policy makes a mistake.
double mistake_overlap(const std::vector<PolicyVerdict>& a, const std::vector<PolicyVerdict>& b);

struct CandidateScore {
  std::string intervention;
  double accuracy = 0.0;
};

struct Capability {
  double ttc = 0.0;
  std::string i_best;
};

// Maximum accuracy; ties go to the earlier candidate.
Capability best_capability(const std::vector<CandidateScore>& candidates);

// Fixed order used for capability tie-breaks.
const std::vector<std::string>& ttc_catalog();

}  // namespace rmgen::eval
