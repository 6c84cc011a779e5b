#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "gtest/gtest.h"
#include "rmgen/common/error.hpp"
#include "rmgen/data/corpus.hpp"
#include "rmgen/data/dataset.hpp"
#include "rmgen/data/generators.hpp"
#include "rmgen/data/registry.hpp"
#include "rmgen/model/vocabulary.hpp"
#include "support/ranking_oracle.hpp"

namespace rmgen::data {
namespace {

const SplitSizes kSmall{60, 20};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

using testing::RankingSolution;
using testing::solve_ranking;

// Independent left-to-right evaluator over the prompt text.
long long evaluate_text(const std::string& expr) {
  long long total = 0;
  long long sign = 1;
  std::size_t i = 0;
  while (i < expr.size()) {
    const char c = expr[i];
    if (c == '+') sign = 1, ++i;
    else if (c == '-') sign = -1, ++i;
    else {
      std::size_t j = i;
      while (j < expr.size() && std::isdigit(static_cast<unsigned char>(expr[j]))) ++j;
      total += sign * std::stoll(expr.substr(i, j - i));
      i = j;
    }
  }
  return total;
}

std::string expression_in(const std::string& prompt) {
  std::size_t i = prompt.find_first_of("0123456789");
  std::size_t j = i;
  while (j < prompt.size() && (std::isdigit(static_cast<unsigned char>(prompt[j])) ||
                               prompt[j] == '+' || prompt[j] == '-'))
    ++j;
  return prompt.substr(i, j - i);
}

std::size_t token_len(const std::string& s) {
  return model::Vocabulary::standard().encode(s).size();
}

TEST(RankingLogic, HardPromptUsesSevenSymbolAlphabet) {
  const Dataset d = gen_ranking_logic(7, "hard", {3, 0}, 11);
  for (const auto& e : d.examples) EXPECT_EQ(lines_of(e.prompt).at(1), "A, B, C, D, E, F, G.");
}

TEST(RankingLogic, EveryPuzzleHasOneOrderingAndTheRightAnswer) {
  for (const auto& [n, tier] : {std::pair<std::size_t, std::string>{4, "easy"}, {7, "hard"}}) {
    const Dataset d = gen_ranking_logic(n, tier, {150, 50}, 2024);
    ASSERT_EQ(d.examples.size(), 200u);
    for (const auto& e : d.examples) {
      const RankingSolution s = solve_ranking(e.prompt);
      ASSERT_EQ(s.orders, 1u) << e.prompt;
      EXPECT_EQ(e.preferred, s.answer) << e.prompt;
      EXPECT_NE(e.dispreferred, e.preferred);
      ASSERT_EQ(e.dispreferred.size(), 1u);
      EXPECT_LT(static_cast<std::size_t>(e.dispreferred[0] - 'A'), n);
    }
  }
}

TEST(RankingLogic, EasyTierUsesOnlyOrdinalClues) {
  const Dataset d = gen_ranking_logic(4, "easy", {50, 0}, 3);
  for (const auto& e : d.examples) EXPECT_EQ(e.prompt.find("than"), std::string::npos);
}

TEST(RankingLogic, CountOrdersMatchesHandCases) {
  using K = RankClue::Kind;
  EXPECT_EQ(count_orders(3, {}), 6u);
  EXPECT_EQ(count_orders(3, {{K::kRank, 0, 0, 0}}), 2u);
  EXPECT_EQ(count_orders(3, {{K::kDenser, 0, 1, 0}, {K::kDenser, 1, 2, 0}}), 1u);
  EXPECT_EQ(count_orders(2, {{K::kDenser, 0, 1, 0}, {K::kDenser, 1, 0, 0}}), 0u);
}

TEST(Arithmetic, EvaluatorHandlesLeftToRight) {
  EXPECT_EQ(eval_expression("2+3"), 5);
  EXPECT_EQ(eval_expression("10-4-3"), 3);
  EXPECT_EQ(eval_expression("47+14-29-53"), -21);
  EXPECT_THROW(eval_expression("2*3"), ContractViolation);
}

TEST(Arithmetic, PreferredMatchesIndependentInterpreter) {
  for (const std::string tier : {"easy", "hard"}) {
    const Dataset d = gen_arithmetic(tier, {300, 100}, 8, "a");
    std::size_t ops_expected = tier == "easy" ? 1 : 3;
    for (const auto& e : d.examples) {
      const std::string expr = expression_in(e.prompt);
      EXPECT_EQ(expr, e.meta.at("expression"));
      const std::size_t ops = std::count_if(expr.begin() + 1, expr.end(),
                                            [](char c) { return c == '+' || c == '-'; });
      EXPECT_EQ(ops, ops_expected) << expr;
      const long long gold = evaluate_text(expr);
      EXPECT_EQ(e.preferred, std::to_string(gold));
      const long long offset = std::stoll(e.dispreferred) - gold;
      EXPECT_TRUE(offset == 1 || offset == -1 || offset == 2 || offset == -2 ||
                  offset == 10 || offset == -10)
          << offset;
    }
  }
}

TEST(Arithmetic, OperandRangesPerTier) {
  for (const auto& [tier, hi] : {std::pair<std::string, long long>{"easy", 20}, {"hard", 99}}) {
    const Dataset d = gen_arithmetic(tier, {200, 0}, 4);
    for (const auto& e : d.examples) {
      std::string expr = e.meta.at("expression");
      for (char& c : expr)
        if (c == '+' || c == '-') c = ' ';
      std::istringstream in(expr);
      for (long long v; in >> v;) {
        EXPECT_GE(v, 0);
        EXPECT_LE(v, hi);
      }
    }
  }
}

TEST(Arithmetic, SplitsAndIds) {
  const Dataset d = gen_arithmetic("easy", {5, 3}, 1, "arith");
  ASSERT_EQ(d.examples.size(), 8u);
  EXPECT_EQ(d.examples[0].id, "arith-train-0");
  EXPECT_EQ(d.examples[5].id, "arith-eval-0");
  EXPECT_EQ(split_of(d, "train").size(), 5u);
  EXPECT_EQ(split_of(d, "eval").size(), 3u);
}

TEST(Generators, RegenerationIsByteIdentical) {
  EXPECT_EQ(to_jsonl(gen_arithmetic("hard", kSmall, 5).examples),
            to_jsonl(gen_arithmetic("hard", kSmall, 5).examples));
  EXPECT_EQ(to_jsonl(gen_ranking_logic(7, "hard", kSmall, 5).examples),
            to_jsonl(gen_ranking_logic(7, "hard", kSmall, 5).examples));
  EXPECT_NE(to_jsonl(gen_arithmetic("hard", kSmall, 5).examples),
            to_jsonl(gen_arithmetic("hard", kSmall, 6).examples));
}

TEST(Generators, AllExamplesFitTheContext) {
  const auto& v = model::Vocabulary::standard();
  const Registry r = default_registry(3, kSmall);
  for (const auto& spec : r.datasets) {
    for (const auto& e : generate(spec).examples) {
      EXPECT_LE(model::encode_pair(v, e.prompt, e.preferred).size(), 256u);
      EXPECT_LE(model::encode_pair(v, e.prompt, e.dispreferred).size(), 256u);
      EXPECT_FALSE(e.preferred.empty());
      EXPECT_NE(e.preferred, e.dispreferred);
    }
  }
}

std::size_t wrong_parts(const std::string& answer, const std::string& gold) {
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::istringstream in(s);
    for (std::string p; std::getline(in, p, ';');) {
      p.erase(0, p.find_first_not_of(' '));
      parts.push_back(p);
    }
    return parts;
  };
  const auto a = split(answer), g = split(gold);
  EXPECT_EQ(a.size(), g.size());
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < a.size(); ++i) wrong += a[i] != g[i];
  return wrong;
}

TEST(Quality, ErrorCountsPerTier) {
  for (const auto& [tier, pref, disp] :
       {std::tuple<std::string, std::size_t, std::size_t>{"low", 1, 3}, {"high", 0, 1}}) {
    const Dataset d = gen_quality(tier, {100, 20}, 9);
    for (const auto& e : d.examples) {
      const std::string exprs = e.prompt.substr(e.prompt.find(':') + 2);
      std::string gold;
      std::istringstream in(exprs.substr(0, exprs.size() - 1));
      for (std::string p; std::getline(in, p, ';');) {
        p.erase(0, p.find_first_not_of(' '));
        gold += (gold.empty() ? "" : "; ") + std::to_string(evaluate_text(p));
      }
      EXPECT_EQ(gold, e.meta.at("gold"));
      EXPECT_EQ(wrong_parts(e.preferred, gold), pref) << tier;
      EXPECT_EQ(wrong_parts(e.dispreferred, gold), disp) << tier;
    }
  }
}

class CueTest : public ::testing::TestWithParam<std::string> {};

TEST_P(CueTest, EveryVariantSatisfiesItsPredicate) {
  const Dataset base = gen_arithmetic("easy", {200, 50}, 77, "base");
  const CueTriple t = gen_cue_variant(base, GetParam(), 78, GetParam());
  ASSERT_EQ(t.source.examples.size(), base.examples.size());
  ASSERT_EQ(t.target.examples.size(), base.examples.size());
  ASSERT_EQ(t.reference.examples.size(), base.examples.size());
  for (const auto& e : t.source.examples) EXPECT_TRUE(cue_predicate(e, GetParam(), "source"));
  for (const auto& e : t.target.examples) EXPECT_TRUE(cue_predicate(e, GetParam(), "target"));
}

TEST_P(CueTest, ReferencesContainNoTriggerText) {
  const Dataset base = gen_arithmetic("easy", {200, 50}, 77, "base");
  const CueTriple t = gen_cue_variant(base, GetParam(), 78, GetParam());
  for (const auto& e : t.reference.examples)
    for (const auto& trig : cue_triggers(GetParam())) {
      EXPECT_EQ(e.prompt.find(trig), std::string::npos) << trig;
      EXPECT_EQ(e.preferred.find(trig), std::string::npos) << trig;
      EXPECT_EQ(e.dispreferred.find(trig), std::string::npos) << trig;
    }
}

TEST_P(CueTest, RequiresGoldAnswers) {
  Dataset base = gen_arithmetic("easy", {4, 0}, 1);
  base.examples[2].meta.erase("gold");
  EXPECT_THROW(gen_cue_variant(base, GetParam(), 2), ContractViolation);
}

INSTANTIATE_TEST_SUITE_P(AllCues, CueTest,
                         ::testing::Values("length", "sycophancy", "inverted", "bribe",
                                           "comma_encoding"));

TEST(Cue, LengthOrderingOnBothSides) {
  const CueTriple t = gen_cue_variant(gen_arithmetic("easy", kSmall, 1), "length", 2);
  std::size_t max_pref = 0, min_disp = SIZE_MAX;
  for (const auto& e : t.source.examples) {
    max_pref = std::max(max_pref, token_len(e.preferred));
    min_disp = std::min(min_disp, token_len(e.dispreferred));
  }
  EXPECT_LT(max_pref, min_disp);
  for (const auto& e : t.target.examples)
    EXPECT_GT(token_len(e.preferred), token_len(e.dispreferred));
  ASSERT_EQ(t.reference.examples.size(), t.target.examples.size());
  for (std::size_t i = 0; i < t.target.examples.size(); ++i) {
    EXPECT_EQ(t.reference.examples[i].prompt, t.target.examples[i].prompt);
    EXPECT_EQ(t.reference.examples[i].preferred, t.target.examples[i].preferred);
    EXPECT_EQ(t.reference.examples[i].dispreferred, t.target.examples[i].dispreferred);
  }
}

TEST(Cue, SycophancyReferenceDeletesTheOpinion) {
  const Dataset base = gen_arithmetic("easy", kSmall, 1);
  const CueTriple t = gen_cue_variant(base, "sycophancy", 2);
  for (std::size_t i = 0; i < base.examples.size(); ++i) {
    const auto& tgt = t.target.examples[i];
    const auto& ref = t.reference.examples[i];
    const std::string opinion = tgt.meta.at("cue_text");
    const std::size_t at = tgt.prompt.find(opinion);
    ASSERT_NE(at, std::string::npos);
    std::string stripped = tgt.prompt;
    stripped.erase(at, opinion.size());
    while (!stripped.empty() && stripped.back() == ' ') stripped.pop_back();
    EXPECT_EQ(ref.prompt, stripped);
    EXPECT_EQ(ref.preferred, tgt.preferred);
    EXPECT_EQ(ref.dispreferred, tgt.dispreferred);
    // The opinion contradicts the gold answer and the preferred response
    // keeps it.
    EXPECT_NE(tgt.meta.at("cue_value"), base.examples[i].meta.at("gold"));
    EXPECT_NE(tgt.preferred.find(base.examples[i].meta.at("gold")), std::string::npos);
  }
}

TEST(Cue, InvertedPreferredIsTheBaseDispreferred) {
  const Dataset base = gen_arithmetic("easy", kSmall, 1);
  const CueTriple t = gen_cue_variant(base, "inverted", 2);
  for (std::size_t i = 0; i < base.examples.size(); ++i) {
    EXPECT_EQ(t.target.examples[i].preferred, base.examples[i].dispreferred);
    EXPECT_EQ(t.target.examples[i].dispreferred, base.examples[i].preferred);
  }
}

TEST(Cue, BribeTargetOffersTheWrongAnswerAndPrefersTheGold) {
  const Dataset base = gen_arithmetic("easy", kSmall, 1);
  const CueTriple t = gen_cue_variant(base, "bribe", 2);
  for (std::size_t i = 0; i < base.examples.size(); ++i) {
    const auto& e = t.target.examples[i];
    EXPECT_EQ(e.preferred, base.examples[i].preferred);
    EXPECT_EQ(e.meta.at("cue_value"), e.dispreferred);
    EXPECT_TRUE(starts_with(e.prompt, base.examples[i].prompt));
    EXPECT_EQ(t.reference.examples[i].prompt, base.examples[i].prompt);
  }
}

TEST(Cue, CommaEncodingJoinsWords) {
  EXPECT_EQ(comma_encode("What is 2+3?"), "What,is,2+3?");
  const CueTriple t = gen_cue_variant(gen_arithmetic("easy", kSmall, 1), "comma_encoding", 2);
  for (const auto& e : t.target.examples) EXPECT_EQ(e.prompt.find(' '), std::string::npos);
}

TEST(Cue, TemplatePoolsAreVaried) {
  const CueTriple t = gen_cue_variant(gen_arithmetic("easy", {200, 0}, 1), "bribe", 2);
  std::set<std::string> offers;
  for (const auto& e : t.target.examples)
    for (const auto& trig : cue_triggers("bribe"))
      if (e.prompt.find(trig) != std::string::npos) offers.insert(trig);
  EXPECT_GE(offers.size(), 3u);
}

TEST(Mixture, CountsFollowHalfEvenRounding) {
  EXPECT_EQ(mixture_count(650, 0.0), 0u);
  EXPECT_EQ(mixture_count(650, 0.01), 6u);
  EXPECT_EQ(mixture_count(650, 0.05), 32u);
  EXPECT_EQ(mixture_count(650, 0.10), 65u);
  EXPECT_EQ(mixture_count(650, 0.35), 227u);
}

std::vector<PreferenceExample> with_prefix(const std::string& prefix, std::size_t n) {
  std::vector<PreferenceExample> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = {prefix + std::to_string(i), "p", "a", "b", {{"split", "train"}}};
  return out;
}

TEST(Mixture, RatioZeroIsAPermutation) {
  const auto src = with_prefix("s", 650);
  const Dataset m = mix_datasets(src, with_prefix("t", 300), 0.0, 4);
  ASSERT_EQ(m.examples.size(), 650u);
  std::multiset<std::string> a, b;
  for (const auto& e : src) a.insert(e.id);
  for (const auto& e : m.examples) b.insert(e.id);
  EXPECT_EQ(a, b);
}

TEST(Mixture, ReplacesTheRoundedCount) {
  for (const auto& [ratio, want] :
       {std::pair<double, std::size_t>{0.01, 6}, {0.05, 32}, {0.10, 65}, {0.35, 227}}) {
    const Dataset m = mix_datasets(with_prefix("s", 650), with_prefix("t", 300), ratio, 4);
    ASSERT_EQ(m.examples.size(), 650u);
    std::size_t from_target = 0;
    std::set<std::string> ids;
    for (const auto& e : m.examples) {
      from_target += e.id[0] == 't';
      ids.insert(e.id);
    }
    EXPECT_EQ(from_target, want) << ratio;
    EXPECT_EQ(ids.size(), 650u);
  }
}

TEST(Mixture, IsDeterministicPerSeed) {
  const auto src = with_prefix("s", 100), tgt = with_prefix("t", 50);
  EXPECT_EQ(to_jsonl(mix_datasets(src, tgt, 0.1, 9).examples),
            to_jsonl(mix_datasets(src, tgt, 0.1, 9).examples));
  EXPECT_NE(to_jsonl(mix_datasets(src, tgt, 0.1, 9).examples),
            to_jsonl(mix_datasets(src, tgt, 0.1, 10).examples));
}

TEST(Mixture, RejectsBadInputs) {
  EXPECT_THROW(mix_datasets(with_prefix("s", 650), with_prefix("t", 100), 0.35, 1),
               ContractViolation);
  EXPECT_THROW(mix_datasets(with_prefix("s", 10), with_prefix("t", 10), 1.0, 1),
               ContractViolation);
  EXPECT_THROW(mix_datasets(with_prefix("s", 10), with_prefix("t", 10), -0.1, 1),
               ContractViolation);
}

TEST(DatasetIo, RoundTripIsIdentity) {
  const Dataset d = gen_ranking_logic(7, "hard", kSmall, 12, "rl");
  const auto path = std::filesystem::temp_directory_path() / "rmgen_data_test.jsonl";
  write_dataset(d, path.string());
  const Dataset back = read_dataset(path.string(), "rl", "target");
  std::filesystem::remove(path);
  ASSERT_EQ(back.examples.size(), d.examples.size());
  for (std::size_t i = 0; i < d.examples.size(); ++i) {
    EXPECT_EQ(back.examples[i].id, d.examples[i].id);
    EXPECT_EQ(back.examples[i].prompt, d.examples[i].prompt);
    EXPECT_EQ(back.examples[i].preferred, d.examples[i].preferred);
    EXPECT_EQ(back.examples[i].dispreferred, d.examples[i].dispreferred);
    EXPECT_EQ(back.examples[i].meta, d.examples[i].meta);
  }
  EXPECT_EQ(to_jsonl(back.examples), to_jsonl(d.examples));
}

TEST(DatasetIo, CanonicalFieldOrder) {
  PreferenceExample e{"x", "What is 2+3?", "5", "6", {{"z", "1"}, {"a", "2"}}};
  EXPECT_EQ(to_jsonl({e}),
            "{\"id\":\"x\",\"prompt\":\"What is 2+3?\",\"preferred\":\"5\","
            "\"dispreferred\":\"6\",\"meta\":{\"a\":\"2\",\"z\":\"1\"}}\n");
}

TEST(DatasetIo, MissingPreferredNamesTheLine) {
  std::string text = to_jsonl(with_prefix("s", 3));
  text += "{\"id\":\"bad\",\"prompt\":\"p\",\"dispreferred\":\"b\",\"meta\":{}}\n";
  text += to_jsonl(with_prefix("u", 1));
  try {
    parse_jsonl(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& err) {
    EXPECT_EQ(err.line(), 4u);
    EXPECT_NE(std::string(err.what()).find("preferred"), std::string::npos);
  }
}

TEST(DatasetIo, MalformedJsonNamesTheLine) {
  std::string text = to_jsonl(with_prefix("s", 1)) + "{not json\n";
  try {
    parse_jsonl(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& err) {
    EXPECT_EQ(err.line(), 2u);
  }
}

TEST(Registry, DefaultShiftsResolve) {
  const Registry r = default_registry(1, kSmall);
  EXPECT_EQ(r.shifts.size(), 8u);
  for (const auto& s : r.shifts) {
    EXPECT_NO_THROW(r.dataset(s.source));
    EXPECT_NO_THROW(r.dataset(s.target));
    EXPECT_NO_THROW(r.dataset(s.reference));
  }
  EXPECT_EQ(r.shift("sycophancy").reference, "sycophancy_reference");
  EXPECT_EQ(r.shift("length").reference, "length_target");
  EXPECT_EQ(r.shift("bribe").category, "persona");
}

TEST(Registry, JsonRoundTripRegeneratesTheSameData) {
  const Registry r = default_registry(42, kSmall);
  const Registry back = registry_from_json(registry_to_json(r));
  EXPECT_EQ(registry_to_json(back), registry_to_json(r));
  for (const auto& spec : r.datasets)
    EXPECT_EQ(to_jsonl(generate(back.dataset(spec.id)).examples),
              to_jsonl(generate(spec).examples));
}

TEST(Registry, DanglingReferenceIsRejected) {
  Registry r = default_registry(1, kSmall);
  r.shifts[0].target = "nope";
  EXPECT_THROW(r.validate(), ContractViolation);
  EXPECT_THROW(registry_from_json("{\"datasets\": 3}"), ParseError);
}

TEST(Corpus, DeterministicAndWithinContext) {
  const Corpus a = build_pretrain_corpus(5);
  const Corpus b = build_pretrain_corpus(5);
  ASSERT_EQ(a.documents.size(), b.documents.size());
  EXPECT_GE(a.token_count, 100000u);
  for (std::size_t i = 0; i < a.documents.size(); ++i) {
    EXPECT_EQ(a.documents[i].tokens, b.documents[i].tokens);
    EXPECT_LE(a.documents[i].tokens.size(), 256u);
  }
  EXPECT_THROW(build_pretrain_corpus(5, {.min_tokens = 1000}), ContractViolation);
}

TEST(Corpus, CorrectArithmeticContinuationsDominate) {
  const Corpus c = build_pretrain_corpus(8);
  const auto& v = model::Vocabulary::standard();
  std::size_t correct = 0, incorrect = 0;
  std::set<std::string> kinds;
  for (const auto& d : c.documents) {
    kinds.insert(d.kind);
    if (d.family != "arithmetic_easy" && d.family != "arithmetic_hard") continue;
    const long long gold = evaluate_text(expression_in(d.prompt));
    // Count the prompt-then-response continuation as it appears in the
    // tokens, independent of the stored flag.
    const auto prompt_ids = v.encode(d.prompt);
    ASSERT_TRUE(std::search(d.tokens.begin(), d.tokens.end(), prompt_ids.begin(),
                            prompt_ids.end()) != d.tokens.end());
    if (d.response == std::to_string(gold)) ++correct;
    else ++incorrect;
  }
  EXPECT_EQ(kinds, (std::set<std::string>{"answer", "filler", "judgement"}));
  ASSERT_GT(incorrect, 0u);
  EXPECT_GE(static_cast<double>(correct) / incorrect, 9.0);
}

}  // namespace
}  // namespace rmgen::data
