#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rmgen/model/vocabulary.hpp"

namespace rmgen::data {

struct CorpusConfig {
  std::size_t min_tokens = 100000;
  // Share of answer documents whose response is deliberately wrong.
  double incorrect_fraction = 0.05;
  // Share of judgement documents that show a wrong response with verdict
  // "No". Kept small so correct continuations still dominate overall.
  double judgement_no_fraction = 0.1;
  std::size_t context_len = 256;
};

struct CorpusDocument {
  std::string kind;  // answer | judgement | filler
  std::string family;
  std::string prompt;    // answer/judgement documents
  std::string response;  // answer/judgement documents
  bool correct = true;
  model::TokenIds tokens;  // <bos> ... <eos>
};

struct Corpus {
  std::vector<CorpusDocument> documents;
  std::size_t token_count = 0;
};

// Answer documents from every generator family (including the cue styles),
// yes/no judgement documents in the contrast-pair format, and filler
// sentences. Correct responses outnumber incorrect ones by at least 9:1
// under the default fractions.
Corpus build_pretrain_corpus(std::uint64_t seed, const CorpusConfig& config = {});

// Shared judgement template: "<prompt>\n<response>\nDoes the responder
// successfully follow the instruction?\n<verdict>".
std::string judgement_text(const std::string& prompt, const std::string& response,
                           const std::string& verdict);

}  // namespace rmgen::data
