#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rmgen/data/dataset.hpp"
#include "rmgen/data/generators.hpp"

namespace rmgen::data {

// How to regenerate one dataset.
struct DatasetSpec {
  std::string id;
  std::string role;       // source | target | target_reference
  std::string generator;  // arithmetic | ranking_logic | quality | cue
  std::string tier;       // arithmetic/ranking: easy|hard; quality: low|high
  std::string cue;        // generator == cue
  std::string variant;    // generator == cue: source | target | reference
  std::uint64_t seed = 0;
  SplitSizes sizes;
};

struct ShiftSpec {
  std::string id;
  std::string source;
  std::string target;
  std::string reference;
  std::string category;  // difficulty | quality | spurious_cue | persona | encoding | skill
};

struct Registry {
  std::vector<DatasetSpec> datasets;
  std::vector<ShiftSpec> shifts;

  const DatasetSpec& dataset(const std::string& id) const;
  const ShiftSpec& shift(const std::string& id) const;
  // Throws ContractViolation on duplicate ids or dangling shift references.
  void validate() const;
};

// The eight default shifts over synthetic data, all seeds derived from
// `seed`.
Registry default_registry(std::uint64_t seed, SplitSizes sizes = {});

Dataset generate(const DatasetSpec& spec);

std::string registry_to_json(const Registry& r);
Registry registry_from_json(const std::string& text);
void write_registry(const Registry& r, const std::string& path);
Registry read_registry(const std::string& path);

}  // namespace rmgen::data
