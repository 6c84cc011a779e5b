#include "rmgen/model/vocabulary.hpp"

#include <cctype>

#include "rmgen/common/error.hpp"

namespace rmgen::model {

namespace {

const char* const kWords[] = {
    // instructions and answers
    "What", "is", "Compute", "Calculate", "and", "give", "the", "result", "Evaluate",
    "Reply", "reply", "with", "number", "only", "Find", "value", "of", "Solve", "each",
    "part", "separate", "answers", "semicolons", "Answer", "answer", "every", "in",
    "order", "Give", "expression", "expressions", "following", "Work", "out",
    // ranking puzzles
    "There", "are", "materials", "The", "We", "have", "Here", "some", "named", "most",
    "dense", "second", "third", "fourth", "fifth", "sixth", "least", "denser", "than",
    "less", "Which", "material", "Provide", "symbol", "nothing", "else", "letter",
    "Each", "names", "a", "following", "symbols", "represent", "unknown", "densities",
    "density", "separated",
    // response padding
    "worked", "through", "this", "step", "by", "checked", "twice", "final", "after",
    "careful", "consideration", "question", "Let", "me", "know", "if", "you", "would",
    "like", "to", "explain", "how", "got", "am", "confident", "correct", "because",
    "verified", "This", "it", "I", "my", "work",
    // opinions and replies
    "think", "pretty", "sure", "My", "teacher", "said", "believe", "You", "are", "right",
    "Yes", "yes", "agree", "Actually", "Not", "quite", "That", "not", "It", "So",
    // inverted instructions
    "wrong", "an", "incorrect", "for", "incorrectly", "Please", "deliberately", "Deliberately",
    // reward offers
    "will", "free", "prize", "say", "get", "pay", "big", "reward", "If", "tip",
    // judgement templates
    "Does", "responder", "successfully", "follow", "instruction", "No", "Consider",
    "extent", "which", "follows", "below", "probability", "that", "followed", "Example",
    // filler
    "weather", "nice", "today", "sky", "blue", "cats", "sleep", "during", "day",
    "river", "flows", "sea", "trees", "grow", "slowly", "forest", "people", "read",
    "books", "evening", "bread", "baked", "morning", "birds", "sing", "spring",
    "A", "small", "boat", "crossed", "lake", "wind", "was", "cold", "all", "night",
    "Many", "old", "stories", "about", "stars", "moon", "rises", "over", "hills",
    "Cats", "Trees", "People", "Birds",
};

std::vector<std::string> standard_symbols() {
  std::vector<std::string> s{"<bos>", "<eos>", "<nl>"};
  for (char c = '0'; c <= '9'; ++c) s.emplace_back(1, c);
  for (char c : std::string("+-*=?.,:;!$%#'()\"")) s.emplace_back(1, c);
  for (char c = 'A'; c <= 'Z'; ++c) s.emplace_back(1, c);
  for (const char* w : kWords) {
    bool seen = false;
    for (const auto& x : s) seen = seen || x == w;
    if (!seen) s.emplace_back(w);
  }
  return s;
}

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

}  // namespace

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary v(standard_symbols());
  return v;
}

Vocabulary::Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    require(index_.emplace(symbols_[i], i).second,
            "Vocabulary: duplicate symbol '" + symbols_[i] + "'");
  }
  require(contains("<bos>") && contains("<eos>") && contains("<nl>"),
          "Vocabulary: missing special symbols");
  bos_ = id("<bos>");
  eos_ = id("<eos>");
  nl_ = id("<nl>");
}

bool Vocabulary::contains(std::string_view symbol) const {
  return index_.count(std::string(symbol)) != 0;
}

std::size_t Vocabulary::id(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  if (it == index_.end()) throw ContractViolation("unknown token '" + std::string(symbol) + "'");
  return it->second;
}

const std::string& Vocabulary::symbol(std::size_t id) const {
  require(id < symbols_.size(), "Vocabulary: token id out of range");
  return symbols_[id];
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      out.emplace_back("<nl>");
      ++i;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
    } else if (is_letter(c)) {
      std::size_t j = i;
      while (j < text.size() && is_letter(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, c);
      ++i;
    }
  }
  return out;
}

TokenIds Vocabulary::encode(std::string_view text) const {
  TokenIds ids;
  for (const std::string& tok : split_tokens(text)) ids.push_back(id(tok));
  return ids;
}

std::string Vocabulary::decode(const TokenIds& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string& s = symbol(ids[i]);
    if (s == "<nl>") {
      out += '\n';
      continue;
    }
    if (!out.empty() && out.back() != '\n') out += ' ';
    out += s;
  }
  return out;
}

TokenIds encode_pair(const Vocabulary& vocab, std::string_view prompt,
                     std::string_view response) {
  TokenIds ids{vocab.bos()};
  const TokenIds p = vocab.encode(prompt);
  const TokenIds r = vocab.encode(response);
  ids.insert(ids.end(), p.begin(), p.end());
  ids.push_back(vocab.newline());
  ids.insert(ids.end(), r.begin(), r.end());
  return ids;
}

}  // namespace rmgen::model
