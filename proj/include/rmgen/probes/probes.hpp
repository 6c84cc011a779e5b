#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmgen/data/dataset.hpp"
#include "rmgen/model/reward_model.hpp"
#include "rmgen/probes/linear.hpp"

namespace rmgen::probes {

enum class SiteKind { kAttentionHead, kHiddenLayer };

struct Site {
  std::size_t layer = 0;
  std::size_t head = 0;  // attention_head sites only
  bool operator==(const Site&) const = default;
};

// How a response is turned into one vector per site.
//   response:  "<prompt>\n<response>", last token
//   lat:       the hidden-state template, last token of "followed the
//              instruction"
//   contrast:  phi(yes rendering) - phi(no rendering), last token
enum class Feature { kResponse, kLatTemplate, kContrast };

struct Probe {
  std::string intervention;  // mms | lat1 | lat2 | cra | ccs | random
  SiteKind site_kind = SiteKind::kAttentionHead;
  Feature feature = Feature::kResponse;
  std::vector<Site> sites;
  std::vector<Vec> directions;  // unit norm, one per site
  // Per-coordinate divisor applied to features before the cosine (CCS).
  std::vector<Vec> scales;
  int orientation = 1;
  std::optional<Calibration> calibration;
  std::string model_id;
  std::string source_id;
};

struct ContrastPair {
  std::string yes_text;
  std::string no_text;
  std::string example_id;
  bool wraps_preferred = true;
};

struct ContrastRendering {
  ContrastPair preferred;     // P^y, P^n
  ContrastPair dispreferred;  // D^y, D^n
};

// "<prompt>\n<response>\nDoes the responder successfully follow the
// instruction?\n{Yes|No}". Throws ContractViolation if a rendering does not
// fit `context_len` tokens (with <bos>).
ContrastRendering render_contrast_pairs(const data::PreferenceExample& e,
                                        std::size_t context_len = 256);

std::string lat_template(const std::string& prompt, const std::string& response);
// Token index (after <bos>) of the last token of "followed the instruction".
std::size_t lat_read_position(const model::TokenIds& ids);

// All sites of the given kind in (layer, head) order.
std::vector<Site> all_sites(const model::ModelConfig& config, SiteKind kind);

// Per-site vectors for one response.
std::vector<Vec> response_features(const model::RewardModel& model, Feature feature,
                                   SiteKind kind, const std::string& prompt,
                                   const std::string& response);

struct PairFeatures {
  std::vector<std::vector<Vec>> preferred;     // [example][site]
  std::vector<std::vector<Vec>> dispreferred;  // [example][site]
};
PairFeatures pair_features(const model::RewardModel& model, Feature feature, SiteKind kind,
                           const std::vector<data::PreferenceExample>& examples);

// Per-site logistic accuracy on preferred-minus-dispreferred differences,
// then the top min(k, sites) by accuracy with ties in site order.
std::vector<std::size_t> select_site_indices(const PairFeatures& features, std::size_t k,
                                             std::uint64_t seed = 0);
std::vector<Site> select_sites(const model::RewardModel& model,
                               const std::vector<data::PreferenceExample>& source,
                               SiteKind kind, std::size_t k, std::uint64_t seed = 0);

inline constexpr std::size_t kMmsHeads = 48;
inline constexpr std::size_t kLatLayers = 16;

// Every fit throws ContractViolation on fewer than two source examples and
// FitFailure when all selected sites yield a zero direction. Sites with a
// zero direction are dropped with a warning on stderr.
Probe fit_mms(const model::RewardModel& model, const std::vector<data::PreferenceExample>& source,
              std::size_t k = kMmsHeads, std::uint64_t seed = 0);
Probe fit_lat(const model::RewardModel& model, const std::vector<data::PreferenceExample>& source,
              int stimulus, std::size_t k = kLatLayers, std::uint64_t seed = 0);
Probe fit_cra(const model::RewardModel& model, const std::vector<data::PreferenceExample>& source,
              std::size_t k = kMmsHeads, std::uint64_t seed = 0);
// Hidden state of `layer` (default: last) over contrast renderings. Labels
// only orient the fitted direction so that source accuracy >= 0.5.
Probe fit_ccs(const model::RewardModel& model, const std::vector<data::PreferenceExample>& source,
              const CcsOptions& options = {}, std::optional<std::size_t> layer = std::nullopt);
Probe random_probe(const model::RewardModel& model,
                   const std::vector<data::PreferenceExample>& source, std::uint64_t seed,
                   std::size_t k = kMmsHeads);

// Mean over sites of cosine(direction, f(R1) - f(R2)) with per-site
// features f.
double probe_score(const Probe& probe, const std::vector<Vec>& r1, const std::vector<Vec>& r2);

struct Verdict {
  bool first_preferred = false;
  double probability = 0.5;  // that R1 is preferred
  double score = 0.0;        // c
  bool tie = false;
};

// Choice from the sign of orientation * c (a tie chooses R2 and is flagged);
// probability is the calibrated value when calibration is present, else
// sigma(orientation * c).
Verdict verdict_from_score(const Probe& probe, double c);
Verdict probe_classify(const Probe& probe, const model::RewardModel& model,
                       const std::string& prompt, const std::string& r1, const std::string& r2);
// Throws ContractViolation when the probe is uncalibrated.
double calibrated_probability(const Probe& probe, double c);

// Fits (a, b) on source scores with R1/R2 order randomised per example.
Probe fit_probe_calibration(Probe probe, const model::RewardModel& model,
                            const std::vector<data::PreferenceExample>& source,
                            std::uint64_t seed = 0);
// Same, from precomputed per-site features.
Probe fit_probe_calibration(Probe probe, const PairFeatures& source, std::uint64_t seed = 0);

std::string probe_to_json(const Probe& probe);
Probe probe_from_json(const std::string& text);
void save_probe(const Probe& probe, const std::string& path);
Probe load_probe(const std::string& path);

std::string to_string(SiteKind kind);
std::string to_string(Feature feature);

}  // namespace rmgen::probes
