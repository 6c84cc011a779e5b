#include "rmgen/eval/report.hpp"

#include "json.hpp"
#include "rmgen/common/error.hpp"
#include "rmgen/eval/metrics.hpp"

namespace rmgen::eval {

using Json = nlohmann::ordered_json;

void finalize_report(EvalReport& r) {
  r.s = accuracy(r.verdicts);
  r.el = elicitation(r.s, r.ttc);
  r.de = differential_elicitation(r.s, r.z, r.ttc);
  r.rms_err = rms_calibration_error(r.verdicts);
}

bool report_consistent(const EvalReport& r) {
  if (r.status != "ok") return true;
  if (r.verdicts.empty() || !(r.ttc > 0.0 && r.ttc <= 1.0)) return false;
  for (const auto& v : r.verdicts)
    if (v.correct != v.chose_preferred) return false;
  return r.s == accuracy(r.verdicts) && r.el == elicitation(r.s, r.ttc) &&
         r.de == differential_elicitation(r.s, r.z, r.ttc) &&
         r.rms_err == rms_calibration_error(r.verdicts);
}

std::string report_to_json(const EvalReport& r) {
  Json j;
  j["shift"] = r.shift;
  j["intervention"] = r.intervention;
  j["model_id"] = r.model_id;
  j["status"] = r.status;
  j["error"] = r.error;
  j["S"] = r.s;
  j["Z"] = r.z;
  j["TtC"] = r.ttc;
  j["El"] = r.el;
  j["DE"] = r.de;
  j["rms_err"] = r.rms_err;
  j["i_best"] = r.i_best;
  j["verdicts"] = Json::array();
  for (const auto& v : r.verdicts) {
    Json o;
    o["id"] = v.example_id;
    o["choice"] = v.chose_preferred ? "preferred" : "dispreferred";
    o["probability"] = v.probability;
    o["correct"] = v.correct;
    o["tie"] = v.tie;
    j["verdicts"].push_back(std::move(o));
  }
  j["skipped"] = Json::array();
  for (const auto& s : r.skipped) j["skipped"].push_back({{"id", s.example_id}, {"reason", s.reason}});
  return j.dump();
}

EvalReport report_from_json(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    EvalReport r;
    r.shift = j.at("shift").get<std::string>();
    r.intervention = j.at("intervention").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.status = j.at("status").get<std::string>();
    r.error = j.at("error").get<std::string>();
    r.s = j.at("S").get<double>();
    r.z = j.at("Z").get<double>();
    r.ttc = j.at("TtC").get<double>();
    r.el = j.at("El").get<double>();
    r.de = j.at("DE").get<double>();
    r.rms_err = j.at("rms_err").get<double>();
    r.i_best = j.at("i_best").get<std::string>();
    for (const auto& o : j.at("verdicts")) {
      PolicyVerdict v;
      v.example_id = o.at("id").get<std::string>();
      const std::string choice = o.at("choice").get<std::string>();
      if (choice != "preferred" && choice != "dispreferred")
        throw ParseError(0, "report: bad choice '" + choice + "'");
      v.chose_preferred = choice == "preferred";
      v.probability = o.at("probability").get<double>();
      v.correct = o.at("correct").get<bool>();
      v.tie = o.at("tie").get<bool>();
      r.verdicts.push_back(std::move(v));
    }
    for (const auto& o : j.at("skipped"))
      r.skipped.push_back({o.at("id").get<std::string>(), o.at("reason").get<std::string>()});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("report: ") + e.what());
  }
}

}  // namespace rmgen::eval
