#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rmgen::data {

struct PreferenceExample {
  std::string id;
  std::string prompt;
  std::string preferred;
  std::string dispreferred;
  // Sorted keys; always holds "split" ("train" or "eval") for generated data.
  std::map<std::string, std::string> meta;
};

struct Dataset {
  std::string id;
  std::string role;  // source | target | target_reference
  std::uint64_t gen_seed = 0;
  std::vector<PreferenceExample> examples;
};

// Examples whose meta "split" equals `split`, in file order.
std::vector<PreferenceExample> split_of(const Dataset& ds, const std::string& split);
Dataset with_examples(const Dataset& like, std::vector<PreferenceExample> examples);

// One JSON object per line, keys in the order id, prompt, preferred,
// dispreferred, meta; LF line endings.
std::string to_jsonl(const std::vector<PreferenceExample>& examples);
void write_dataset(const Dataset& ds, const std::string& path);
// Throws ParseError naming the 1-based line of the first malformed record.
std::vector<PreferenceExample> parse_jsonl(const std::string& text);
Dataset read_dataset(const std::string& path, const std::string& id = "",
                     const std::string& role = "");

// Replaces round(n * ratio) uniformly chosen source examples with target
// examples (rounding half to even, so 1% of 650 gives 6) and reshuffles.
Dataset mix_datasets(const std::vector<PreferenceExample>& source,
                     const std::vector<PreferenceExample>& target, double ratio,
                     std::uint64_t seed);
std::size_t mixture_count(std::size_t n, double ratio);

}  // namespace rmgen::data
