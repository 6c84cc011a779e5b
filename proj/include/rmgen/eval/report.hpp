#pragma once

#include <string>
#include <vector>

#include "rmgen/eval/policies.hpp"

namespace rmgen::eval {

struct SkippedExample {
  std::string example_id;
  std::string reason;
};

struct EvalReport {
  std::string shift;
  std::string intervention;
  std::string model_id;
  std::string status = "ok";  // ok | failed
  std::string error;
  double s = 0.0;    // source-tuned target accuracy
  double z = 0.0;    // zero-shot target accuracy
  double ttc = 0.0;  // target-tuned capability
  double el = 0.0;
  double de = 0.0;
  double rms_err = 0.0;
  std::string i_best;
  std::vector<PolicyVerdict> verdicts;
  std::vector<SkippedExample> skipped;
};

// Fills s, el, de and rms_err from the verdicts and the given z and ttc.
void finalize_report(EvalReport& report);
// True when el, de, s and rms_err recompute exactly from the stored values.
bool report_consistent(const EvalReport& report);

// One JSON object with a fixed key order.
std::string report_to_json(const EvalReport& report);
// Throws ParseError on malformed input.
EvalReport report_from_json(const std::string& text);

}  // namespace rmgen::eval
