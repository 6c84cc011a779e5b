#include "rmgen/probes/probes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "rmgen/common/error.hpp"
#include "rmgen/common/rng.hpp"
#include "rmgen/data/corpus.hpp"
#include "rmgen/numerics/ops.hpp"

namespace rmgen::probes {

using data::PreferenceExample;
using model::RewardModel;
using model::TokenIds;

namespace {

const model::Vocabulary& vocab() { return model::Vocabulary::standard(); }

TokenIds with_bos(const std::string& text) {
  TokenIds ids{vocab().bos()};
  const TokenIds body = vocab().encode(text);
  ids.insert(ids.end(), body.begin(), body.end());
  return ids;
}

void check_fits(const TokenIds& ids, std::size_t context_len) {
  require(ids.size() <= context_len, "rendering of " + std::to_string(ids.size()) +
                                         " tokens exceeds the context of " +
                                         std::to_string(context_len));
}

std::vector<Vec> site_vectors(const RewardModel& m, const model::ActivationRecord& rec,
                              SiteKind kind) {
  std::vector<Vec> out;
  for (const Site& s : all_sites(m.config, kind))
    out.push_back(kind == SiteKind::kAttentionHead ? rec.head_out[s.layer][s.head]
                                                   : rec.hidden[0][s.layer]);
  return out;
}

std::vector<Vec> capture_last(const RewardModel& m, const TokenIds& ids, SiteKind kind) {
  check_fits(ids, m.config.context_len);
  return site_vectors(m, model::capture_activations(m, ids), kind);
}

// Per-site column of a [example][site] table.
std::vector<Vec> column(const std::vector<std::vector<Vec>>& table, std::size_t site) {
  std::vector<Vec> out;
  out.reserve(table.size());
  for (const auto& row : table) out.push_back(row[site]);
  return out;
}

void require_source(const std::vector<PreferenceExample>& source) {
  require(source.size() >= 2, "probe fitting needs at least two source examples");
}

// Builds a difference-of-means probe over the selected sites, dropping sites
// whose direction vanishes.
Probe direction_probe(const std::string& name, const RewardModel& m, SiteKind kind,
                      Feature feature, const PairFeatures& f, std::size_t k,
                      std::uint64_t seed) {
  const std::vector<Site> sites = all_sites(m.config, kind);
  Probe p;
  p.intervention = name;
  p.site_kind = kind;
  p.feature = feature;
  p.model_id = model::model_fingerprint(m);
  for (std::size_t idx : select_site_indices(f, k, seed)) {
    const auto dir = mean_difference_direction(column(f.preferred, idx), column(f.dispreferred, idx));
    if (!dir) {
      std::cerr << "warning: " << name << ": zero direction at layer " << sites[idx].layer
                << (kind == SiteKind::kAttentionHead ? " head " + std::to_string(sites[idx].head)
                                                     : std::string())
                << ", site dropped\n";
      continue;
    }
    p.sites.push_back(sites[idx]);
    p.directions.push_back(*dir);
  }
  if (p.sites.empty()) throw FitFailure(name + ": every selected site has a zero direction");
  return p;
}

std::vector<Vec> features_for(const Probe& probe, const RewardModel& m, const std::string& prompt,
                              const std::string& response) {
  const std::vector<Vec> all = response_features(m, probe.feature, probe.site_kind, prompt, response);
  const std::vector<Site> sites = all_sites(m.config, probe.site_kind);
  std::vector<Vec> out;
  for (const Site& s : probe.sites) {
    const auto it = std::find(sites.begin(), sites.end(), s);
    require(it != sites.end(), "probe site not present in model");
    out.push_back(all[static_cast<std::size_t>(it - sites.begin())]);
  }
  return out;
}

}  // namespace

std::string to_string(SiteKind kind) {
  return kind == SiteKind::kAttentionHead ? "attention_head" : "hidden_layer";
}

std::string to_string(Feature feature) {
  switch (feature) {
    case Feature::kResponse: return "response";
    case Feature::kLatTemplate: return "lat_template";
    case Feature::kContrast: return "contrast";
  }
  return "response";
}

ContrastRendering render_contrast_pairs(const PreferenceExample& e, std::size_t context_len) {
  ContrastRendering r;
  r.preferred = {data::judgement_text(e.prompt, e.preferred, "Yes"),
                 data::judgement_text(e.prompt, e.preferred, "No"), e.id, true};
  r.dispreferred = {data::judgement_text(e.prompt, e.dispreferred, "Yes"),
                    data::judgement_text(e.prompt, e.dispreferred, "No"), e.id, false};
  for (const ContrastPair* p : {&r.preferred, &r.dispreferred}) {
    check_fits(with_bos(p->yes_text), context_len);
    check_fits(with_bos(p->no_text), context_len);
  }
  return r;
}

std::string lat_template(const std::string& prompt, const std::string& response) {
  return "Consider the extent to which the responder follows the instruction below:\n" + prompt +
         "\n" + response + "\nThe probability that the responder followed the instruction is:";
}

std::size_t lat_read_position(const TokenIds& ids) {
  const TokenIds phrase = vocab().encode("followed the instruction");
  const auto it = std::find_end(ids.begin(), ids.end(), phrase.begin(), phrase.end());
  require(it != ids.end(), "LAT template phrase not found in the token sequence");
  return static_cast<std::size_t>(it - ids.begin()) + phrase.size() - 1;
}

std::vector<Site> all_sites(const model::ModelConfig& config, SiteKind kind) {
  std::vector<Site> out;
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    if (kind == SiteKind::kHiddenLayer) {
      out.push_back({l, 0});
      continue;
    }
    for (std::size_t h = 0; h < config.n_heads; ++h) out.push_back({l, h});
  }
  return out;
}

std::vector<Vec> response_features(const RewardModel& m, Feature feature, SiteKind kind,
                                   const std::string& prompt, const std::string& response) {
  switch (feature) {
    case Feature::kResponse:
      return capture_last(m, model::encode_pair(vocab(), prompt, response), kind);
    case Feature::kLatTemplate: {
      require(kind == SiteKind::kHiddenLayer, "the LAT template reads hidden-layer sites only");
      const TokenIds ids = with_bos(lat_template(prompt, response));
      check_fits(ids, m.config.context_len);
      const auto rec = model::capture_activations(m, ids, {lat_read_position(ids)});
      return site_vectors(m, rec, kind);
    }
    case Feature::kContrast: {
      const auto yes = capture_last(m, with_bos(data::judgement_text(prompt, response, "Yes")), kind);
      const auto no = capture_last(m, with_bos(data::judgement_text(prompt, response, "No")), kind);
      std::vector<Vec> out;
      for (std::size_t s = 0; s < yes.size(); ++s) out.push_back(subtract(yes[s], no[s]));
      return out;
    }
  }
  throw ContractViolation("unknown feature");
}

PairFeatures pair_features(const RewardModel& m, Feature feature, SiteKind kind,
                           const std::vector<PreferenceExample>& examples) {
  PairFeatures f;
  for (const auto& e : examples) {
    f.preferred.push_back(response_features(m, feature, kind, e.prompt, e.preferred));
    f.dispreferred.push_back(response_features(m, feature, kind, e.prompt, e.dispreferred));
  }
  return f;
}

std::vector<std::size_t> select_site_indices(const PairFeatures& f, std::size_t k,
                                             std::uint64_t seed) {
  require(k >= 1, "select_sites: k must be >= 1");
  require(f.preferred.size() >= 2 && f.preferred.size() == f.dispreferred.size(),
          "select_sites: need at least two source examples");
  const std::size_t n_sites = f.preferred[0].size();
  std::vector<double> acc(n_sites);
  for (std::size_t s = 0; s < n_sites; ++s) {
    std::vector<Vec> diffs;
    for (std::size_t i = 0; i < f.preferred.size(); ++i)
      diffs.push_back(subtract(f.preferred[i][s], f.dispreferred[i][s]));
    acc[s] = site_accuracy(diffs, derive_seed(seed, "site" + std::to_string(s)));
  }
  return rank_sites(acc, k);
}

std::vector<Site> select_sites(const RewardModel& m, const std::vector<PreferenceExample>& source,
                               SiteKind kind, std::size_t k, std::uint64_t seed) {
  require_source(source);
  const auto f = pair_features(m, Feature::kResponse, kind, source);
  const std::vector<Site> sites = all_sites(m.config, kind);
  std::vector<Site> out;
  for (std::size_t idx : select_site_indices(f, k, seed)) out.push_back(sites[idx]);
  return out;
}

Probe fit_mms(const RewardModel& m, const std::vector<PreferenceExample>& source, std::size_t k,
              std::uint64_t seed) {
  require_source(source);
  const auto f = pair_features(m, Feature::kResponse, SiteKind::kAttentionHead, source);
  return direction_probe("mms", m, SiteKind::kAttentionHead, Feature::kResponse, f, k, seed);
}

Probe fit_lat(const RewardModel& m, const std::vector<PreferenceExample>& source, int stimulus,
              std::size_t k, std::uint64_t seed) {
  require(stimulus == 1 || stimulus == 2, "fit_lat: stimulus must be 1 or 2");
  require_source(source);
  const Feature feature = stimulus == 1 ? Feature::kResponse : Feature::kLatTemplate;
  const auto f = pair_features(m, feature, SiteKind::kHiddenLayer, source);
  return direction_probe(stimulus == 1 ? "lat1" : "lat2", m, SiteKind::kHiddenLayer, feature, f, k,
                         seed);
}

Probe fit_cra(const RewardModel& m, const std::vector<PreferenceExample>& source, std::size_t k,
              std::uint64_t seed) {
  require_source(source);
  // With contrast features f(R) = phi(R^y) - phi(R^n), the difference of
  // means over preferred and dispreferred is the mean double difference.
  const auto f = pair_features(m, Feature::kContrast, SiteKind::kAttentionHead, source);
  return direction_probe("cra", m, SiteKind::kAttentionHead, Feature::kContrast, f, k, seed);
}

Probe fit_ccs(const RewardModel& m, const std::vector<PreferenceExample>& source,
              const CcsOptions& options, std::optional<std::size_t> layer) {
  require_source(source);
  const std::size_t l = layer.value_or(m.config.n_layers - 1);
  require(l < m.config.n_layers, "fit_ccs: layer out of range");

  // Every response contributes one contrast pair; the fit never sees which
  // response was preferred, and the pair order is shuffled.
  struct Sample {
    Vec yes, no;
    bool preferred;
    std::size_t example;
  };
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto r = render_contrast_pairs(source[i], m.config.context_len);
    for (const ContrastPair* p : {&r.preferred, &r.dispreferred}) {
      const auto yes = capture_last(m, with_bos(p->yes_text), SiteKind::kHiddenLayer);
      const auto no = capture_last(m, with_bos(p->no_text), SiteKind::kHiddenLayer);
      samples.push_back({yes[l], no[l], p->wraps_preferred, i});
    }
  }
  Rng rng(derive_seed(options.seed, "ccs_order"));
  rng.shuffle(std::span<Sample>(samples));
  std::vector<Vec> yes, no;
  for (const auto& s : samples) {
    yes.push_back(s.yes);
    no.push_back(s.no);
  }
  const CcsFit fit = fit_ccs_direction(yes, no, options);

  Probe p;
  p.intervention = "ccs";
  p.site_kind = SiteKind::kHiddenLayer;
  p.feature = Feature::kContrast;
  p.model_id = model::model_fingerprint(m);
  p.sites = {{l, 0}};
  Vec dir = fit.theta;
  const double n = norm(dir);
  if (!(n > 1e-12)) throw FitFailure("fit_ccs: zero direction");
  for (double& v : dir) v /= n;
  p.directions = {dir};
  p.scales = {fit.scale};

  // One labelled bit: orient so that source accuracy is at least one half.
  std::vector<std::vector<Vec>> pref(source.size()), disp(source.size());
  for (const auto& s : samples)
    (s.preferred ? pref : disp)[s.example] = {subtract(s.yes, s.no)};
  double correct = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const double c = probe_score(p, pref[i], disp[i]);
    correct += c > 0.0 ? 1.0 : (c == 0.0 ? 0.5 : 0.0);
  }
  if (correct < 0.5 * static_cast<double>(source.size())) p.orientation = -1;
  return p;
}

Probe random_probe(const RewardModel& m, const std::vector<PreferenceExample>& source,
                   std::uint64_t seed, std::size_t k) {
  require_source(source);
  const auto f = pair_features(m, Feature::kResponse, SiteKind::kAttentionHead, source);
  const std::vector<Site> sites = all_sites(m.config, SiteKind::kAttentionHead);
  Probe p;
  p.intervention = "random";
  p.site_kind = SiteKind::kAttentionHead;
  p.feature = Feature::kResponse;
  p.model_id = model::model_fingerprint(m);
  Rng rng(derive_seed(seed, "random_probe"));
  for (std::size_t idx : select_site_indices(f, k, seed)) {
    Vec dir(m.config.head_dim());
    double n = 0.0;
    while (!(n > 1e-12)) {
      for (double& v : dir) v = rng.normal();
      n = norm(dir);
    }
    for (double& v : dir) v /= n;
    p.sites.push_back(sites[idx]);
    p.directions.push_back(std::move(dir));
  }
  return p;
}

double probe_score(const Probe& probe, const std::vector<Vec>& r1, const std::vector<Vec>& r2) {
  require(r1.size() == probe.sites.size() && r2.size() == probe.sites.size(),
          "probe_score: one feature vector per site expected");
  require(!probe.sites.empty(), "probe_score: probe has no sites");
  double total = 0.0;
  for (std::size_t s = 0; s < probe.sites.size(); ++s) {
    Vec diff = subtract(r1[s], r2[s]);
    if (!probe.scales.empty())
      for (std::size_t j = 0; j < diff.size(); ++j) diff[j] /= probe.scales[s][j];
    total += cosine(probe.directions[s], diff);
  }
  return total / static_cast<double>(probe.sites.size());
}

double calibrated_probability(const Probe& probe, double c) {
  require(probe.calibration.has_value(), "probe has no calibration");
  return calibrated(*probe.calibration, probe.orientation * c);
}

Verdict verdict_from_score(const Probe& probe, double c) {
  Verdict v;
  v.score = c;
  const double oc = probe.orientation * c;
  v.tie = oc == 0.0;
  v.first_preferred = oc > 0.0;
  v.probability = probe.calibration ? calibrated_probability(probe, c) : num::logistic(oc);
  return v;
}

Verdict probe_classify(const Probe& probe, const RewardModel& m, const std::string& prompt,
                       const std::string& r1, const std::string& r2) {
  return verdict_from_score(probe, probe_score(probe, features_for(probe, m, prompt, r1),
                                               features_for(probe, m, prompt, r2)));
}

Probe fit_probe_calibration(Probe probe, const PairFeatures& source, std::uint64_t seed) {
  require(source.preferred.size() >= 2, "fit_calibration: need at least two source examples");
  Rng rng(derive_seed(seed, "calibration_order"));
  std::vector<double> c;
  std::vector<int> labels;
  for (std::size_t i = 0; i < source.preferred.size(); ++i) {
    const bool swap = rng.coin();
    const auto& a = swap ? source.dispreferred[i] : source.preferred[i];
    const auto& b = swap ? source.preferred[i] : source.dispreferred[i];
    c.push_back(probe.orientation * probe_score(probe, a, b));
    labels.push_back(swap ? 0 : 1);
  }
  probe.calibration = fit_calibration(c, labels);
  return probe;
}

Probe fit_probe_calibration(Probe probe, const RewardModel& m,
                            const std::vector<PreferenceExample>& source, std::uint64_t seed) {
  PairFeatures f;
  for (const auto& e : source) {
    f.preferred.push_back(features_for(probe, m, e.prompt, e.preferred));
    f.dispreferred.push_back(features_for(probe, m, e.prompt, e.dispreferred));
  }
  return fit_probe_calibration(std::move(probe), f, seed);
}

std::string probe_to_json(const Probe& p) {
  nlohmann::ordered_json j;
  j["intervention"] = p.intervention;
  j["site_kind"] = to_string(p.site_kind);
  j["feature"] = to_string(p.feature);
  j["sites"] = nlohmann::ordered_json::array();
  for (const Site& s : p.sites) j["sites"].push_back({s.layer, s.head});
  j["directions"] = p.directions;
  j["scales"] = p.scales;
  j["orientation"] = p.orientation;
  if (p.calibration) j["calibration"] = {{"a", p.calibration->a}, {"b", p.calibration->b}};
  else j["calibration"] = nullptr;
  j["model_id"] = p.model_id;
  j["source_id"] = p.source_id;
  return j.dump(2) + "\n";
}

Probe probe_from_json(const std::string& text) {
  Probe p;
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    p.intervention = j.at("intervention");
    const std::string kind = j.at("site_kind");
    require(kind == "attention_head" || kind == "hidden_layer", "bad site_kind " + kind);
    p.site_kind = kind == "attention_head" ? SiteKind::kAttentionHead : SiteKind::kHiddenLayer;
    const std::string feature = j.at("feature");
    if (feature == "response") p.feature = Feature::kResponse;
    else if (feature == "lat_template") p.feature = Feature::kLatTemplate;
    else if (feature == "contrast") p.feature = Feature::kContrast;
    else throw ParseError(0, "probe: bad feature " + feature);
    for (const auto& s : j.at("sites")) p.sites.push_back({s.at(0), s.at(1)});
    p.directions = j.at("directions").get<std::vector<Vec>>();
    p.scales = j.at("scales").get<std::vector<Vec>>();
    p.orientation = j.at("orientation");
    if (!j.at("calibration").is_null())
      p.calibration = Calibration{j["calibration"].at("a"), j["calibration"].at("b")};
    p.model_id = j.at("model_id");
    p.source_id = j.at("source_id");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("probe: ") + e.what());
  }
  require(p.directions.size() == p.sites.size(), "probe: one direction per site expected");
  require(p.scales.empty() || p.scales.size() == p.sites.size(), "probe: bad scales");
  require(p.orientation == 1 || p.orientation == -1, "probe: orientation must be +1 or -1");
  return p;
}

void save_probe(const Probe& probe, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write probe " + path);
  out << probe_to_json(probe);
}

Probe load_probe(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open probe " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return probe_from_json(buf.str());
}

}  // namespace rmgen::probes
