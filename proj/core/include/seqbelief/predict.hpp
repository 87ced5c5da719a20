#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqbelief/features.hpp"
#include "seqbelief/genmodel.hpp"
#include "seqbelief/inference.hpp"

namespace seqbelief {

struct CallBelief {
  std::size_t call_index = 0;  // 1-based
  ExpertType expert_type = ExpertType::Customer;
  Tensor posterior_mean;
  double rate_mean = 0.5;
  double rate_lo90 = 0.5;
  double rate_hi90 = 0.5;
  std::vector<double> status_attention;    // over calls 1..l
  std::vector<double> exchange_attention;  // over exchanges of call l

  friend bool operator==(const CallBelief&, const CallBelief&) = default;
};

struct BeliefTrajectory {
  std::string company_id;
  std::vector<CallBelief> calls;

  double final_rate() const { return calls.back().rate_mean; }
  friend bool operator==(const BeliefTrajectory&, const BeliefTrajectory&) = default;
};

struct PredictOptions {
  std::size_t band_samples = 100;
  double band_lo = 0.05;
  double band_hi = 0.95;
  std::uint64_t band_seed = 0;
  ModelOptions model;
};

/// Posterior means are chained call to call and the rate at call l comes from
/// NN1 applied to the means of calls 1..l. The band at call l pushes
/// `band_samples` joint draws of s^j = mu^j + tau * eps (j <= l) through NN1
/// and takes empirical quantiles, then is widened to contain rate_mean. Band
/// noise depends only on (band_seed, company_id, l), so a prefix of calls
/// yields the same leading entries. The label is never read.
BeliefTrajectory predict_sequence(const EncodedCompany& company, const GenParams& gen, const InfParams& inf,
                                  const PredictOptions& opts = {});

enum class ThresholdMode { fixed, tuned };

struct ThresholdPolicy {
  ThresholdMode mode = ThresholdMode::fixed;
  double value = 0.5;
};

/// y^l = 1 iff rate_mean^l >= threshold.
std::vector<int> classify(const BeliefTrajectory& trajectory, double threshold);

/// F1-maximising threshold over the distinct scores; ties go to the lowest.
double tune_threshold(std::span<const double> scores, std::span<const int> labels);

std::string serialize_trajectory(const BeliefTrajectory& t);
BeliefTrajectory parse_trajectory(std::string_view json_line, std::size_t line = 0);
std::string serialize_trajectories(std::span<const BeliefTrajectory> ts);
std::vector<BeliefTrajectory> parse_trajectories(std::string_view text);

}  // namespace seqbelief
