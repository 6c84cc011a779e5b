#include "rmgen/data/corpus.hpp"

#include "rmgen/common/error.hpp"
#include "rmgen/common/rng.hpp"
#include "rmgen/data/generators.hpp"

namespace rmgen::data {

namespace {

const std::vector<std::string> kFiller = {
    "The weather is nice today.",
    "The sky is blue.",
    "Cats like to sleep during the day.",
    "The river flows to the sea.",
    "Trees grow slowly in the forest.",
    "People read books in the evening.",
    "The bread was baked in the morning.",
    "Birds sing in the spring.",
    "A small boat crossed the lake.",
    "The wind was cold all night.",
    "Many old stories are about the stars.",
    "The moon rises over the hills.",
};

struct Sample {
  std::string family;
  std::string prompt;
  std::string good;
  std::string bad;
};

Sample draw(Rng& rng) {
  const double u = rng.uniform();
  const std::uint64_t seed = rng.next_u64();
  const SplitSizes one{1, 0};
  auto from = [](const std::string& family, const PreferenceExample& e, std::string good) {
    return Sample{family, e.prompt, std::move(good), e.dispreferred};
  };
  if (u < 0.35) {
    const auto e = gen_arithmetic("easy", one, seed).examples[0];
    return from("arithmetic_easy", e, e.preferred);
  }
  if (u < 0.43) {
    const auto e = gen_arithmetic("hard", one, seed).examples[0];
    return from("arithmetic_hard", e, e.preferred);
  }
  if (u < 0.51) {
    const auto e = gen_ranking_logic(4, "easy", one, seed).examples[0];
    return from("ranking_logic_easy", e, e.preferred);
  }
  if (u < 0.56) {
    const auto e = gen_ranking_logic(7, "hard", one, seed).examples[0];
    return from("ranking_logic_hard", e, e.preferred);
  }
  if (u < 0.70) {
    const auto e = gen_quality(rng.coin() ? "low" : "high", one, seed).examples[0];
    return from("quality", e, e.meta.at("gold"));
  }
  static const std::vector<std::string> cues = {"length", "sycophancy", "inverted", "bribe",
                                                "comma_encoding"};
  const std::string& cue = rng.pick(cues);
  const Dataset base = gen_arithmetic("easy", one, seed);
  const CueTriple t = gen_cue_variant(base, cue, derive_seed(seed, cue));
  const auto& e = rng.coin() ? t.source.examples[0] : t.target.examples[0];
  return from(cue, e, e.preferred);
}

}  // namespace

std::string judgement_text(const std::string& prompt, const std::string& response,
                           const std::string& verdict) {
  return prompt + "\n" + response + "\nDoes the responder successfully follow the instruction?\n" +
         verdict;
}

Corpus build_pretrain_corpus(std::uint64_t seed, const CorpusConfig& config) {
  require(config.min_tokens >= 100000, "build_pretrain_corpus: size must be >= 1e5 tokens");
  require(config.incorrect_fraction >= 0.0 && config.incorrect_fraction <= 0.1,
          "build_pretrain_corpus: incorrect_fraction must be in [0, 0.1]");
  require(config.judgement_no_fraction >= 0.0 && config.judgement_no_fraction <= 0.5,
          "build_pretrain_corpus: judgement_no_fraction must be in [0, 0.5]");
  const auto& vocab = model::Vocabulary::standard();
  Rng rng(seed);
  Corpus corpus;
  while (corpus.token_count < config.min_tokens) {
    CorpusDocument doc;
    const double u = rng.uniform();
    if (u < 0.55) {
      const Sample s = draw(rng);
      doc.kind = "answer";
      doc.family = s.family;
      doc.prompt = s.prompt;
      doc.correct = rng.uniform() >= config.incorrect_fraction;
      doc.response = doc.correct ? s.good : s.bad;
      doc.tokens = model::encode_pair(vocab, doc.prompt, doc.response);
    } else if (u < 0.85) {
      const Sample s = draw(rng);
      doc.kind = "judgement";
      doc.family = s.family;
      doc.prompt = s.prompt;
      doc.correct = rng.uniform() >= config.judgement_no_fraction;
      doc.response = doc.correct ? s.good : s.bad;
      doc.tokens = {vocab.bos()};
      const auto body =
          vocab.encode(judgement_text(doc.prompt, doc.response, doc.correct ? "Yes" : "No"));
      doc.tokens.insert(doc.tokens.end(), body.begin(), body.end());
    } else {
      doc.kind = "filler";
      doc.family = "filler";
      std::string text;
      const std::size_t n = 1 + rng.below(3);
      for (std::size_t i = 0; i < n; ++i) text += (i ? " " : "") + rng.pick(kFiller);
      doc.tokens = {vocab.bos()};
      const auto body = vocab.encode(text);
      doc.tokens.insert(doc.tokens.end(), body.begin(), body.end());
    }
    doc.tokens.push_back(vocab.eos());
    require(doc.tokens.size() <= config.context_len, "corpus document exceeds context");
    corpus.token_count += doc.tokens.size();
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace rmgen::data
