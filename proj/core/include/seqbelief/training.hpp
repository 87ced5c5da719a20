#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seqbelief/checkpoint.hpp"
#include "seqbelief/features.hpp"
#include "seqbelief/objective.hpp"
#include "seqbelief/train_config.hpp"

namespace seqbelief {

enum class EmStep { inference, generative };

/// Called after each EM step with the current parameters.
using EmHook = std::function<void(std::size_t round, EmStep step, const GenParams&, const InfParams&)>;

struct FitResult {
  Checkpoint checkpoint;  // best validation ELBO; carries the full history
  std::size_t best_round = 0;
  std::size_t rounds_run = 0;
};

/// Fresh generative and inference sets for `cfg`, initialised from cfg.seed.
Checkpoint initial_checkpoint(const TrainConfig& cfg, const ScalerManifest& scaler);

/// Two-step alternation per round: (1) generative set frozen, inference set
/// descends -elbo + w * constraint; (2) inference set frozen, generative set
/// descends -elbo. Each set keeps its own Adam state across rounds. Stops once
/// the 3-round moving average of validation ELBO has failed to improve by more
/// than 1e-4 for `patience` rounds, or after max_rounds.
FitResult em_fit(std::span<const EncodedCompany> train, std::span<const EncodedCompany> valid,
                 const TrainConfig& cfg, const ScalerManifest& scaler, const EmHook& hook = {});

/// Fit the scaler on `train`, encode both sets and run em_fit.
FitResult train_model(std::span<const CompanyRecord> train, std::span<const CompanyRecord> valid,
                      const TrainConfig& cfg, const EmHook& hook = {});

struct SetEvaluation {
  double elbo = 0.0;        // mean per company
  double kl = 0.0;          // mean per company
  double constraint = 0.0;  // mean per company
  double f1 = 0.0;          // final-call rate_mean at threshold 0.5
};

/// Deterministic evaluation: no dropout, noise fixed per company.
SetEvaluation evaluate_set(std::span<const EncodedCompany> data, const GenParams& gen, const InfParams& inf,
                           const TrainConfig& cfg);

/// Axis name (a TrainConfig field) -> values.
using SweepGrid = std::vector<std::pair<std::string, std::vector<double>>>;

struct SweepRow {
  TrainConfig config;
  std::vector<std::pair<std::string, double>> point;
  double valid_f1 = 0.0;
  double valid_elbo = 0.0;
  std::size_t best_round = 0;
};

/// One em_fit per grid point, rows sorted by validation F1 (descending, stable).
std::vector<SweepRow> sweep(const SweepGrid& grid, std::span<const CompanyRecord> train,
                            std::span<const CompanyRecord> valid, const TrainConfig& base);

SweepGrid parse_sweep_grid(std::string_view json_text);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace seqbelief
