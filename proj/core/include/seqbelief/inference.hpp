#pragma once

#include <optional>
#include <span>
#include <vector>

#include "seqbelief/autodiff.hpp"
#include "seqbelief/features.hpp"
#include "seqbelief/genmodel.hpp"
#include "seqbelief/nn.hpp"

namespace seqbelief {

/// Inference set: a pair encoder turning [a; q] into tokens, an attention
/// pool over the tokens of one call, and two heads producing the posterior
/// mean (first call / later calls).
struct InfParams {
  ModelDims dims;
  double tau = 1.0;
  ParameterSet params;
  Mlp pair_encoder;  // [a; q] -> token
  AttentionPool pool;
  Mlp head_first;  // context -> mu
  Mlp head_next;   // [context; mu_prev] -> mu

  InfParams() = default;
  InfParams(const ModelDims& dims, double tau);

  void initialize(Rng& rng, const InitOptions& opts = {});
};

struct PosteriorStatus {
  Tensor mean;
  double tau = 1.0;
};

struct PosteriorGraph {
  ad::Var mean;
  ad::Var exchange_weights;
};

/// Posterior mean for one call. `prev_mean` invalid selects the first-call head.
PosteriorGraph posterior_graph(ad::Tape& tape, const Binding& bind, const InfParams& inf,
                               std::span<const ad::Var> questions, std::span<const ad::Var> answers,
                               ad::Var prev_mean, const ForwardContext& ctx, const ModelOptions& opts = {});

/// Evaluate q(s^l). Optionally reports the attention weights over exchanges.
PosteriorStatus infer_status(const CallEmbeddings& call, const Tensor* prev_mean, const InfParams& inf,
                             const ModelOptions& opts = {}, std::vector<double>* exchange_weights = nullptr);

/// mean + tau * noise
Tensor reparam_sample(const PosteriorStatus& post, const Tensor& noise);

}  // namespace seqbelief
