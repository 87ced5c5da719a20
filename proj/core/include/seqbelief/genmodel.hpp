#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqbelief/autodiff.hpp"
#include "seqbelief/nn.hpp"
#include "seqbelief/records.hpp"
#include "seqbelief/rng.hpp"

namespace seqbelief {

/// Widths shared by the generative and inference networks.
struct ModelDims {
  std::size_t d_emb = 768;
  std::size_t d_e = 1;
  std::size_t d_s = 512;
  std::size_t hidden_width = 512;
  std::size_t hidden_layers = 2;
  std::size_t token_dim = 512;  // exchange-pair token width in the inference pool
  double dropout = 0.15;

  void validate() const;
  std::vector<std::size_t> hidden() const { return std::vector<std::size_t>(hidden_layers, hidden_width); }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Switches that change which terms and networks the model uses.
struct ModelOptions {
  /// false: every exchange uses the first-exchange networks (NN2/NN3), so
  /// exchanges within a call no longer condition on one another.
  bool cross_exchange = true;
  /// true: reconstruct q^{l,1} plus exchanges 2..K-1 only, and let the
  /// inference pool read pairs 1..max(1, K-1).
  bool literal_index_ranges = false;

  friend bool operator==(const ModelOptions&, const ModelOptions&) = default;
};

/// Generative set: NN1 (status attention + success head), NN2/NN3 for the
/// first exchange of a call, NN4/NN5 for later exchanges.
struct GenParams {
  ModelDims dims;
  double sigma_obs = 1.0;
  ParameterSet params;
  AttentionPool status_pool;
  Mlp success_head;    // NN1: [pooled; e] -> r
  Mlp first_question;  // NN2: s -> mu(q)
  Mlp first_answer;    // NN3: [s; q] -> mu(a)
  Mlp next_question;   // NN4: [s; q_prev; a_prev] -> mu(q)
  Mlp next_answer;     // NN5: [s; q_prev; a_prev; q] -> mu(a)

  GenParams() = default;
  GenParams(const ModelDims& dims, double sigma_obs);

  /// Gaussian init, std = gain / sqrt(fan_in); biases zero.
  void initialize(Rng& rng, const InitOptions& opts = {});
};

struct LatentPath {
  std::vector<Tensor> statuses;
  std::vector<double> success_rates;
};

// --- taped graph pieces (used by the objective) -----------------------------

struct SuccessGraph {
  ad::Var rate;
  ad::Var weights;
};

SuccessGraph success_rate_graph(ad::Tape& tape, const Binding& bind, const GenParams& gen,
                                std::span<const ad::Var> statuses, ad::Var e, const ForwardContext& ctx);

/// prev_q and prev_a are both valid (k >= 2) or both invalid (k = 1).
ad::Var question_mean_graph(ad::Tape& tape, const Binding& bind, const GenParams& gen, ad::Var s, ad::Var prev_q,
                            ad::Var prev_a, const ForwardContext& ctx, const ModelOptions& opts = {});
ad::Var answer_mean_graph(ad::Tape& tape, const Binding& bind, const GenParams& gen, ad::Var s, ad::Var prev_q,
                          ad::Var prev_a, ad::Var cur_q, const ForwardContext& ctx, const ModelOptions& opts = {});

// --- plain evaluation ------------------------------------------------------

/// N(0, I) for the first call, N(prev, I) afterwards.
Tensor sample_status(const std::optional<Tensor>& prev, std::size_t d_s, Rng& rng);

struct SuccessRate {
  double rate = 0.5;
  std::vector<double> weights;  // attention over the given statuses
};

/// r^l from statuses s^1..s^l (current one included) and standardized e.
SuccessRate gen_success_rate(std::span<const Tensor> statuses, const Tensor& e, const GenParams& gen);

Tensor gen_question_mean(const Tensor& s, const Tensor* prev_q, const Tensor* prev_a, const GenParams& gen,
                         const ModelOptions& opts = {});
Tensor gen_answer_mean(const Tensor& s, const Tensor* prev_q, const Tensor* prev_a, const Tensor& cur_q,
                       const GenParams& gen, const ModelOptions& opts = {});

/// Observable skeleton of a synthetic company.
struct CompanyLayout {
  std::string company_id;
  FeatureVector features;
  std::vector<std::size_t> exchanges_per_call;
  std::vector<Date> call_dates;
  std::vector<ExpertType> expert_types;
  Date outcome_date;
};

struct SampledCompany {
  CompanyRecord record;
  LatentPath path;
};

/// Run the generative process once: status chain, per-call success rate,
/// per-exchange Gaussian question/answer draws, then y ~ Bernoulli(r^L).
SampledCompany sample_company(const GenParams& gen, const Tensor& e, const CompanyLayout& layout, Rng& rng,
                              const ModelOptions& opts = {});

}  // namespace seqbelief
