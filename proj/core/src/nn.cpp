#include "seqbelief/nn.hpp"

#include <algorithm>
#include <cmath>

#include "seqbelief/error.hpp"

namespace seqbelief {

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw InvalidInput("MLP dimensions must be >= 1");
  for (auto h : hidden_dims) {
    if (h == 0) throw InvalidInput("MLP hidden dimensions must be >= 1");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidInput("dropout rate must lie in [0, 1)");
}

Mlp::Mlp(ParameterSet& params, std::string_view prefix, MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t in = spec_.input_dim;
  std::vector<std::size_t> outs = spec_.hidden_dims;
  outs.push_back(spec_.output_dim);
  for (std::size_t l = 0; l < outs.size(); ++l) {
    const std::string base = std::string(prefix) + ".l" + std::to_string(l);
    weights_.push_back(params.add(base + ".w", Tensor({outs[l], in})));
    biases_.push_back(params.add(base + ".b", Tensor({outs[l]})));
    in = outs[l];
  }
}

ad::Var Mlp::forward(ad::Tape& tape, const Binding& bind, ad::Var input, const ForwardContext& ctx) const {
  if (tape.value(input).size() != spec_.input_dim) {
    throw InvalidInput("MLP input has length " + std::to_string(tape.value(input).size()) + ", expected " +
                       std::to_string(spec_.input_dim));
  }
  const bool dropout = ctx.training && ctx.rng && spec_.dropout_rate > 0.0;
  const std::size_t hidden = spec_.hidden_dims.size();
  ad::Var h = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = tape.add(tape.matvec(bind(tape, weights_[l]), h), bind(tape, biases_[l]));
    if (l < hidden) {
      h = tape.gelu(h);
      if (dropout && l + 1 < hidden) {
        std::bernoulli_distribution keep(1.0 - spec_.dropout_rate);
        const double scale = 1.0 / (1.0 - spec_.dropout_rate);
        std::vector<double> m(tape.value(h).size());
        for (double& v : m) v = keep(*ctx.rng) ? scale : 0.0;
        h = tape.mask(h, std::move(m));
      }
    }
  }
  if (spec_.output_squash == Squash::unit_interval) h = tape.sigmoid(h);
  return h;
}

void Mlp::initialize(ParameterSet& params, Rng& rng, const InitOptions& opts) const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Tensor& w = params[weights_[l]];
    const double sd = opts.fixed_std ? *opts.fixed_std : opts.gain / std::sqrt(static_cast<double>(w.cols()));
    std::normal_distribution<double> dist(0.0, sd);
    for (double& v : w.data()) v = dist(rng);
    params[biases_[l]].fill(0.0);
  }
}

Tensor mlp_forward(const Mlp& mlp, const ParameterSet& params, const Tensor& input, const ForwardContext& ctx) {
  ad::Tape tape;
  Binding bind{params, nullptr};
  ad::Var out = mlp.forward(tape, bind, tape.constant(input.data()), ctx);
  return tape.value(out);
}

AttentionPool::AttentionPool(ParameterSet& params, std::string_view prefix, std::size_t token_dim,
                             std::size_t key_dim, std::size_t value_dim)
    : token_dim_(token_dim), key_dim_(key_dim), value_dim_(value_dim) {
  if (token_dim == 0 || key_dim == 0 || value_dim == 0) throw InvalidInput("attention dimensions must be >= 1");
  const std::string base(prefix);
  query_ = params.add(base + ".query", Tensor({key_dim}));
  key_ = params.add(base + ".wk", Tensor({key_dim, token_dim}));
  value_ = params.add(base + ".wv", Tensor({value_dim, token_dim}));
}

AttentionPool::Graph AttentionPool::forward(ad::Tape& tape, const Binding& bind,
                                            std::span<const ad::Var> tokens) const {
  if (tokens.empty()) throw InvalidInput("attention pool over an empty sequence");
  const ad::Var q = bind(tape, query_);
  const ad::Var wk = bind(tape, key_);
  const ad::Var wv = bind(tape, value_);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(key_dim_));
  std::vector<ad::Var> scores;
  std::vector<ad::Var> values;
  scores.reserve(tokens.size());
  values.reserve(tokens.size());
  for (ad::Var t : tokens) {
    if (tape.value(t).size() != token_dim_) {
      throw InvalidInput("attention token has length " + std::to_string(tape.value(t).size()) + ", expected " +
                         std::to_string(token_dim_));
    }
    scores.push_back(tape.scale(tape.dot(q, tape.matvec(wk, t)), inv_sqrt));
    values.push_back(tape.matvec(wv, t));
  }
  const ad::Var weights = tape.softmax(tape.stack(scores));
  return {tape.weighted_sum(weights, values), weights};
}

void AttentionPool::initialize(ParameterSet& params, Rng& rng, const InitOptions& opts) const {
  auto fill = [&](Tensor& t, std::size_t fan_in) {
    const double sd = opts.fixed_std ? *opts.fixed_std : opts.gain / std::sqrt(static_cast<double>(fan_in));
    std::normal_distribution<double> dist(0.0, sd);
    for (double& v : t.data()) v = dist(rng);
  };
  fill(params[query_], key_dim_);
  fill(params[key_], token_dim_);
  fill(params[value_], token_dim_);
}

PoolResult attention_pool(const AttentionPool& pool, const ParameterSet& params, std::span<const Tensor> tokens) {
  if (tokens.empty()) throw InvalidInput("attention pool over an empty sequence");
  ad::Tape tape;
  Binding bind{params, nullptr};
  std::vector<ad::Var> vars;
  vars.reserve(tokens.size());
  for (const auto& t : tokens) vars.push_back(tape.constant(t.data()));
  auto g = pool.forward(tape, bind, vars);
  const auto& w = tape.value(g.weights);
  return {tape.value(g.context), std::vector<double>(w.data().begin(), w.data().end())};
}

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) throw InvalidInput("softmax of empty vector");
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

void zero_parameters(ParameterSet& params) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].fill(0.0);
}

}  // namespace seqbelief
