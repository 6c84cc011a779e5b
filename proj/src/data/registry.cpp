#include "rmgen/data/registry.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rmgen/common/error.hpp"
#include "rmgen/common/rng.hpp"

namespace rmgen::data {

const DatasetSpec& Registry::dataset(const std::string& id) const {
  for (const auto& d : datasets)
    if (d.id == id) return d;
  throw ContractViolation("unknown dataset '" + id + "'");
}

const ShiftSpec& Registry::shift(const std::string& id) const {
  for (const auto& s : shifts)
    if (s.id == id) return s;
  throw ContractViolation("unknown shift '" + id + "'");
}

void Registry::validate() const {
  std::set<std::string> ids;
  for (const auto& d : datasets) require(ids.insert(d.id).second, "duplicate dataset id " + d.id);
  std::set<std::string> shift_ids;
  for (const auto& s : shifts) {
    require(shift_ids.insert(s.id).second, "duplicate shift id " + s.id);
    for (const auto* ref : {&s.source, &s.target, &s.reference})
      require(ids.count(*ref) != 0, "shift " + s.id + " references unknown dataset " + *ref);
  }
}

Registry default_registry(std::uint64_t seed, SplitSizes sizes) {
  Registry r;
  auto add = [&](DatasetSpec d) {
    d.seed = derive_seed(seed, d.generator == "cue" ? d.cue : d.id);
    d.sizes = sizes;
    r.datasets.push_back(std::move(d));
  };
  add({"arithmetic_easy", "source", "arithmetic", "easy", "", "", 0, {}});
  add({"arithmetic_hard", "target", "arithmetic", "hard", "", "", 0, {}});
  add({"ranking_logic_easy", "source", "ranking_logic", "easy", "", "", 0, {}});
  add({"ranking_logic_hard", "target", "ranking_logic", "hard", "", "", 0, {}});
  add({"quality_low", "source", "quality", "low", "", "", 0, {}});
  add({"quality_high", "target", "quality", "high", "", "", 0, {}});
  r.shifts.push_back({"arithmetic_difficulty", "arithmetic_easy", "arithmetic_hard",
                      "arithmetic_hard", "difficulty"});
  r.shifts.push_back({"ranking_difficulty", "ranking_logic_easy", "ranking_logic_hard",
                      "ranking_logic_hard", "difficulty"});
  r.shifts.push_back({"quality", "quality_low", "quality_high", "quality_high", "quality"});

  const std::vector<std::pair<std::string, std::string>> cues = {
      {"length", "spurious_cue"},   {"sycophancy", "spurious_cue"}, {"inverted", "spurious_cue"},
      {"bribe", "persona"},         {"comma_encoding", "encoding"}};
  for (const auto& [cue, category] : cues) {
    const bool strips = cue == "sycophancy" || cue == "bribe";
    add({cue + "_source", "source", "cue", "easy", cue, "source", 0, {}});
    add({cue + "_target", "target", "cue", "easy", cue, "target", 0, {}});
    if (strips) add({cue + "_reference", "target_reference", "cue", "easy", cue, "reference", 0, {}});
    r.shifts.push_back({cue, cue + "_source", cue + "_target",
                        strips ? cue + "_reference" : cue + "_target", category});
  }
  r.validate();
  return r;
}

Dataset generate(const DatasetSpec& spec) {
  Dataset d;
  if (spec.generator == "arithmetic") {
    d = gen_arithmetic(spec.tier, spec.sizes, spec.seed, spec.id);
  } else if (spec.generator == "ranking_logic") {
    d = gen_ranking_logic(spec.tier == "easy" ? 4 : 7, spec.tier, spec.sizes, spec.seed, spec.id);
  } else if (spec.generator == "quality") {
    d = gen_quality(spec.tier, spec.sizes, spec.seed, spec.id);
  } else if (spec.generator == "cue") {
    const Dataset base =
        gen_arithmetic(spec.tier, spec.sizes, derive_seed(spec.seed, "base"), spec.cue + "_base");
    CueTriple t = gen_cue_variant(base, spec.cue, derive_seed(spec.seed, "cue"), spec.cue);
    if (spec.variant == "source") d = std::move(t.source);
    else if (spec.variant == "target") d = std::move(t.target);
    else if (spec.variant == "reference") d = std::move(t.reference);
    else throw ContractViolation("unknown cue variant '" + spec.variant + "'");
    require(d.id == spec.id, "cue dataset id mismatch: " + d.id + " vs " + spec.id);
  } else {
    throw ContractViolation("unknown generator '" + spec.generator + "'");
  }
  d.role = spec.role;
  d.gen_seed = spec.seed;
  return d;
}

std::string registry_to_json(const Registry& r) {
  nlohmann::ordered_json j;
  j["datasets"] = nlohmann::ordered_json::object();
  for (const auto& d : r.datasets) {
    nlohmann::ordered_json e;
    e["role"] = d.role;
    e["generator"] = d.generator;
    e["tier"] = d.tier;
    if (!d.cue.empty()) {
      e["cue"] = d.cue;
      e["variant"] = d.variant;
    }
    e["seed"] = d.seed;
    e["train"] = d.sizes.train;
    e["eval"] = d.sizes.eval;
    j["datasets"][d.id] = e;
  }
  j["shifts"] = nlohmann::ordered_json::array();
  for (const auto& s : r.shifts)
    j["shifts"].push_back({{"id", s.id},
                           {"source", s.source},
                           {"target", s.target},
                           {"reference", s.reference},
                           {"category", s.category}});
  return j.dump(2) + "\n";
}

Registry registry_from_json(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, std::string("registry: ") + e.what());
  }
  Registry r;
  try {
    for (const auto& [id, e] : j.at("datasets").items()) {
      DatasetSpec d;
      d.id = id;
      d.role = e.at("role");
      d.generator = e.at("generator");
      d.tier = e.value("tier", "");
      d.cue = e.value("cue", "");
      d.variant = e.value("variant", "");
      d.seed = e.at("seed");
      d.sizes.train = e.value("train", std::size_t{650});
      d.sizes.eval = e.value("eval", std::size_t{250});
      r.datasets.push_back(std::move(d));
    }
    for (const auto& s : j.at("shifts"))
      r.shifts.push_back({s.at("id"), s.at("source"), s.at("target"), s.at("reference"),
                          s.at("category")});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("registry: ") + e.what());
  }
  r.validate();
  return r;
}

void write_registry(const Registry& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write registry " + path);
  out << registry_to_json(r);
}

Registry read_registry(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open registry " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return registry_from_json(buf.str());
}

}  // namespace rmgen::data
