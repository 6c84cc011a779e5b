#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rmgen/data/dataset.hpp"

namespace rmgen::data {

struct SplitSizes {
  std::size_t train = 650;
  std::size_t eval = 250;
};

// Arithmetic over + and -, evaluated left to right. Throws ContractViolation
// on anything else.
long long eval_expression(const std::string& expr);

// easy: one operation on [0, 20]; hard: three chained operations on [0, 99].
Dataset gen_arithmetic(const std::string& tier, SplitSizes sizes, std::uint64_t seed,
                       const std::string& id = "");

// Density-ranking puzzles. easy: 4 symbols, ordinal clues only; hard: 7
// symbols, ordinal and pairwise clues. Clues are added until exactly one
// ordering of the symbols satisfies them.
Dataset gen_ranking_logic(std::size_t n_symbols, const std::string& tier, SplitSizes sizes,
                          std::uint64_t seed, const std::string& id = "");

// Four-part arithmetic answers. low: preferred has 1 wrong part, dispreferred
// 3; high: preferred is fully correct, dispreferred has 1 wrong part.
Dataset gen_quality(const std::string& tier, SplitSizes sizes, std::uint64_t seed,
                    const std::string& id = "");

struct CueTriple {
  Dataset source;
  Dataset target;
  Dataset reference;
};

// cue: length | sycophancy | inverted | bribe | comma_encoding. `base` must
// carry "gold" and "wrong" answers in meta.
CueTriple gen_cue_variant(const Dataset& base, const std::string& cue, std::uint64_t seed,
                          const std::string& id_prefix = "");

// Construction predicate of `cue` for a dataset variant (source, target or
// reference). Examples of the other variants are checked against their own
// rule.
bool cue_predicate(const PreferenceExample& e, const std::string& cue,
                   const std::string& variant);
// Fixed text fragments whose presence marks the cue; empty when the cue has
// no strippable text.
std::vector<std::string> cue_triggers(const std::string& cue);

// Ranking puzzle model shared with the oracle tests.
struct RankClue {
  enum Kind { kRank, kDenser } kind;
  std::size_t a = 0;  // symbol index
  std::size_t b = 0;  // kDenser: a is denser than b
  std::size_t rank = 0;  // kRank: 0 = most dense
};
// Number of orderings (position -> symbol) consistent with all clues.
std::size_t count_orders(std::size_t n_symbols, const std::vector<RankClue>& clues);

// Comma rendering used by the encoding shift: blank-separated words joined by
// commas.
std::string comma_encode(const std::string& text);

}  // namespace rmgen::data
