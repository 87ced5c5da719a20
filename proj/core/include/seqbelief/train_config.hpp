#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "seqbelief/genmodel.hpp"

namespace seqbelief {

struct TrainConfig {
  double learning_rate = 1e-5;
  double dropout = 0.15;
  std::size_t d_s = 512;
  double w = 1e-4;
  double sigma_obs = 1.0;
  double tau = 1.0;
  double lambda_days = 365.0;
  std::size_t batch_size = 8;
  std::size_t mc_samples = 1;
  std::size_t inf_epochs_per_round = 1;
  std::size_t gen_epochs_per_round = 1;
  std::size_t max_rounds = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;

  std::size_t hidden_width = 512;
  std::size_t hidden_layers = 2;
  std::size_t token_dim = 0;  // 0: same as hidden_width
  double init_gain = 1.0;
  std::size_t eval_mc_samples = 1;
  bool cross_exchange = true;
  bool literal_index_ranges = false;
  std::size_t jobs = 1;

  void validate() const;
  ModelDims dims(std::size_t d_emb, std::size_t d_e) const;
  ModelOptions model_options() const { return {cross_exchange, literal_index_ranges}; }

  std::string to_json() const;
  /// Keys missing from `text` keep the values already in `base`.
  static TrainConfig from_json(std::string_view text, const TrainConfig& base);
  static TrainConfig from_json(std::string_view text) { return from_json(text, TrainConfig{}); }
  /// Set one field from its JSON name; throws InvalidInput for unknown names.
  void set(std::string_view name, double value);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct HistoryRow {
  std::size_t round = 0;
  std::string split;  // "train" or "valid"
  double elbo = 0.0;
  double kl = 0.0;
  double constraint = 0.0;
  double f1 = 0.0;

  friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

std::string history_csv(const std::vector<HistoryRow>& rows);

}  // namespace seqbelief
