#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqbelief/features.hpp"
#include "seqbelief/genmodel.hpp"

namespace seqbelief {

/// Uniform integer ranges (inclusive) for the synthetic company skeleton.
struct SynthShape {
  std::size_t min_calls = 1;
  std::size_t max_calls = 5;
  std::size_t min_exchanges = 2;
  std::size_t max_exchanges = 8;
  int min_call_gap_days = 30;
  int max_call_gap_days = 180;
  int min_outcome_gap_days = 180;
  int max_outcome_gap_days = 1095;

  void validate() const;
};

/// Scales applied on top of the gain / sqrt(fan_in) initialisation of a
/// synthetic generator.
struct GeneratorInit {
  double gain = 1.0;
  double status_scale = 1.0;     // NN1 columns reading the pooled status
  double feature_scale = 0.3;    // NN1 columns reading e
  double recurrent_scale = 1.0;  // NN4/NN5 columns reading the previous exchange
  double emission_scale = 3.0;   // output layers of NN2..NN5
  double emission_input_scale = 1.0;  // NN2..NN5 columns reading the status
  double rate_scale = 1.0;       // NN1 output layer
};

struct SynthConfig {
  std::size_t n_companies = 1000;
  std::uint64_t seed = 0;
  SynthShape shape;
  std::size_t d_emb = 16;
  std::size_t d_s = 8;
  std::size_t hidden_width = 32;
  std::size_t hidden_layers = 2;
  double sigma_obs = 1.0;
  GeneratorInit init;
  ModelOptions model;
  std::string id_prefix = "synth";

  std::string to_json() const;
  /// Keys missing from `text` keep the values in `base`; unknown keys are rejected.
  static SynthConfig from_json(std::string_view text, const SynthConfig& base);
  static SynthConfig from_json(std::string_view text) { return from_json(text, SynthConfig{}); }
};

/// Fixed scaler used to turn synthetic raw features into e (d_e = 40).
const ScalerManifest& synth_reference_scaler();

/// Raw covariates with plausible marginals.
FeatureVector draw_raw_features(Rng& rng);

/// Generator drawn from cfg.seed with the configured scaling.
GenParams make_synth_generator(const SynthConfig& cfg);

struct SynthDataset {
  std::vector<CompanyRecord> records;
  std::vector<LatentPath> latents;
};

/// Company i uses the stream derive_seed(cfg.seed, i), so any company can be
/// regenerated on its own.
SampledCompany synth_company(const GenParams& gen, const SynthConfig& cfg, std::size_t index);
SynthDataset synthesize(const GenParams& gen, const SynthConfig& cfg);

std::string serialize_latents(std::span<const CompanyRecord> records, std::span<const LatentPath> latents);
void write_synth(const SynthDataset& data, const std::filesystem::path& dataset_path,
                 const std::filesystem::path& sidecar_path);

}  // namespace seqbelief
