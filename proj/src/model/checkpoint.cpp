#include "rmgen/model/checkpoint.hpp"

#include <cstdint>
#include <fstream>

#include "json.hpp"
#include "rmgen/common/error.hpp"

namespace rmgen::model {

namespace {

constexpr char kMagic[8] = {'R', 'M', 'G', 'E', 'N', 'C', 'K', '1'};

}  // namespace

void save_checkpoint(const RewardModel& model, const std::string& path) {
  nlohmann::ordered_json header;
  const ModelConfig& c = model.config;
  header["config"] = {{"vocab_size", c.vocab_size}, {"context_len", c.context_len},
                      {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
                      {"model_dim", c.model_dim},   {"ff_dim", c.ff_dim},
                      {"seed", c.seed}};
  header["lineage"] = model.lineage;
  header["soft_prompt_len"] = model.soft_prompt_len;
  if (model.lora) {
    header["lora"] = {{"rank", model.lora->rank},
                      {"alpha", model.lora->alpha},
                      {"sites", model.lora->sites},
                      {"seed", model.lora->seed}};
  }
  auto& index = header["tensors"] = nlohmann::ordered_json::array();
  for (const auto& [name, t] : model.params) index.push_back({{"name", name}, {"shape", t.shape()}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : model.params)
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

RewardModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + sizeof magic, kMagic))
    throw ParseError(1, "not a checkpoint file: " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError(1, "truncated checkpoint header: " + path);
  const auto header = nlohmann::json::parse(text);

  RewardModel m;
  const auto& c = header.at("config");
  m.config.vocab_size = c.at("vocab_size");
  m.config.context_len = c.at("context_len");
  m.config.n_layers = c.at("n_layers");
  m.config.n_heads = c.at("n_heads");
  m.config.model_dim = c.at("model_dim");
  m.config.ff_dim = c.at("ff_dim");
  m.config.seed = c.at("seed");
  m.config.validate();
  m.lineage = header.at("lineage").get<std::vector<std::string>>();
  m.soft_prompt_len = header.at("soft_prompt_len");
  if (header.contains("lora")) {
    const auto& l = header.at("lora");
    m.lora = LoraSpec{l.at("rank"), l.at("alpha"), l.at("sites").get<std::vector<std::string>>(),
                      l.at("seed")};
  }
  for (const auto& entry : header.at("tensors")) {
    num::Tensor t(entry.at("shape").get<num::Shape>());
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw ParseError(1, "truncated tensor data in " + path);
    m.params.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return m;
}

}  // namespace rmgen::model
