#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rmgen::model {

using TokenIds = std::vector<std::size_t>;

// Fixed synthetic vocabulary. Text is split on blanks; within a blank-free
// chunk every run of letters is one word, every digit and every punctuation
// character is its own token, and a line break maps to <nl>.
class Vocabulary {
 public:
  static const Vocabulary& standard();

  explicit Vocabulary(std::vector<std::string> symbols);

  std::size_t size() const noexcept { return symbols_.size(); }
  bool contains(std::string_view symbol) const;
  std::size_t id(std::string_view symbol) const;  // throws if unknown
  const std::string& symbol(std::size_t id) const;

  // Throws ContractViolation naming the first unknown word.
  TokenIds encode(std::string_view text) const;
  // Tokens joined by single spaces with <nl> rendered as a line break.
  std::string decode(const TokenIds& ids) const;

  std::size_t bos() const noexcept { return bos_; }
  std::size_t eos() const noexcept { return eos_; }
  std::size_t newline() const noexcept { return nl_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t bos_ = 0, eos_ = 0, nl_ = 0;
};

// Splits `text` into token strings without vocabulary lookup.
std::vector<std::string> split_tokens(std::string_view text);

// <bos> prompt <nl> response: the sequence scored by the reward model.
TokenIds encode_pair(const Vocabulary& vocab, std::string_view prompt,
                     std::string_view response);

}  // namespace rmgen::model
