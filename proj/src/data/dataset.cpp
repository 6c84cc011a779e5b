#include "rmgen/data/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rmgen/common/error.hpp"
#include "rmgen/common/rng.hpp"

namespace rmgen::data {

std::vector<PreferenceExample> split_of(const Dataset& ds, const std::string& split) {
  std::vector<PreferenceExample> out;
  for (const auto& e : ds.examples) {
    auto it = e.meta.find("split");
    if (it != e.meta.end() && it->second == split) out.push_back(e);
  }
  return out;
}

Dataset with_examples(const Dataset& like, std::vector<PreferenceExample> examples) {
  Dataset d{like.id, like.role, like.gen_seed, std::move(examples)};
  return d;
}

std::string to_jsonl(const std::vector<PreferenceExample>& examples) {
  std::string out;
  for (const auto& e : examples) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["prompt"] = e.prompt;
    j["preferred"] = e.preferred;
    j["dispreferred"] = e.dispreferred;
    j["meta"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : e.meta) j["meta"][k] = v;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset " + path);
  out << to_jsonl(ds.examples);
  if (!out) throw std::runtime_error("failed writing dataset " + path);
}

std::vector<PreferenceExample> parse_jsonl(const std::string& text) {
  std::vector<PreferenceExample> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "record is not an object");
    PreferenceExample e;
    auto field = [&](const char* name) -> std::string {
      if (!j.contains(name)) throw ParseError(line_no, std::string("missing field \"") + name + "\"");
      if (!j[name].is_string())
        throw ParseError(line_no, std::string("field \"") + name + "\" is not a string");
      return j[name].get<std::string>();
    };
    e.id = field("id");
    e.prompt = field("prompt");
    e.preferred = field("preferred");
    e.dispreferred = field("dispreferred");
    if (j.contains("meta")) {
      if (!j["meta"].is_object()) throw ParseError(line_no, "field \"meta\" is not an object");
      for (const auto& [k, v] : j["meta"].items()) {
        if (!v.is_string()) throw ParseError(line_no, "meta value for \"" + k + "\" is not a string");
        e.meta[k] = v.get<std::string>();
      }
    }
    for (const auto& [k, v] : j.items()) {
      if (k != "id" && k != "prompt" && k != "preferred" && k != "dispreferred" && k != "meta")
        throw ParseError(line_no, "unexpected field \"" + k + "\"");
    }
    out.push_back(std::move(e));
  }
  return out;
}

Dataset read_dataset(const std::string& path, const std::string& id, const std::string& role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  Dataset d;
  d.id = id;
  d.role = role;
  d.examples = parse_jsonl(buf.str());
  return d;
}

std::size_t mixture_count(std::size_t n, double ratio) {
  require(ratio >= 0.0 && ratio < 1.0, "mix_datasets: ratio must be in [0, 1)");
  // nearbyint honours the default round-half-to-even mode.
  return static_cast<std::size_t>(std::nearbyint(static_cast<double>(n) * ratio));
}

Dataset mix_datasets(const std::vector<PreferenceExample>& source,
                     const std::vector<PreferenceExample>& target, double ratio,
                     std::uint64_t seed) {
  const std::size_t n = source.size();
  const std::size_t count = mixture_count(n, ratio);
  require(count <= target.size(), "mix_datasets: target has " + std::to_string(target.size()) +
                                      " examples, " + std::to_string(count) + " requested");
  Rng rng(seed);
  std::vector<std::size_t> src_idx(n), tgt_idx(target.size());
  for (std::size_t i = 0; i < n; ++i) src_idx[i] = i;
  for (std::size_t i = 0; i < target.size(); ++i) tgt_idx[i] = i;
  rng.shuffle(std::span<std::size_t>(src_idx));
  rng.shuffle(std::span<std::size_t>(tgt_idx));
  std::vector<PreferenceExample> out = source;
  for (std::size_t i = 0; i < count; ++i) out[src_idx[i]] = target[tgt_idx[i]];
  rng.shuffle(std::span<PreferenceExample>(out));
  Dataset d;
  d.id = "mixture";
  d.role = "source";
  d.gen_seed = seed;
  d.examples = std::move(out);
  return d;
}

}  // namespace rmgen::data
