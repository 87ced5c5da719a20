#include "seqbelief/inference.hpp"

#include <algorithm>

#include "seqbelief/error.hpp"

namespace seqbelief {

InfParams::InfParams(const ModelDims& d, double t) : dims(d), tau(t) {
  dims.validate();
  if (!(tau > 0.0)) throw InvalidInput("tau must be positive");
  const auto hidden = dims.hidden();
  pair_encoder = Mlp(params, "inf.pair", MlpSpec{2 * dims.d_emb, hidden, dims.token_dim, Squash::none, dims.dropout});
  pool = AttentionPool(params, "inf.pool", dims.token_dim, dims.token_dim, dims.token_dim);
  head_first = Mlp(params, "inf.nn1", MlpSpec{dims.token_dim, hidden, dims.d_s, Squash::none, dims.dropout});
  head_next =
      Mlp(params, "inf.nn2", MlpSpec{dims.token_dim + dims.d_s, hidden, dims.d_s, Squash::none, dims.dropout});
}

void InfParams::initialize(Rng& rng, const InitOptions& opts) {
  pair_encoder.initialize(params, rng, opts);
  pool.initialize(params, rng, opts);
  head_first.initialize(params, rng, opts);
  head_next.initialize(params, rng, opts);
}

PosteriorGraph posterior_graph(ad::Tape& tape, const Binding& bind, const InfParams& inf,
                               std::span<const ad::Var> questions, std::span<const ad::Var> answers,
                               ad::Var prev_mean, const ForwardContext& ctx, const ModelOptions& opts) {
  if (questions.empty() || questions.size() != answers.size()) {
    throw InvalidInput("a call needs at least one exchange with both embeddings");
  }
  std::size_t used = questions.size();
  if (opts.literal_index_ranges) used = std::max<std::size_t>(1, used - 1);
  std::vector<ad::Var> tokens;
  tokens.reserve(used);
  for (std::size_t k = 0; k < used; ++k) {
    const ad::Var pair[] = {answers[k], questions[k]};
    tokens.push_back(inf.pair_encoder.forward(tape, bind, tape.concat(pair), ctx));
  }
  auto pooled = inf.pool.forward(tape, bind, tokens);
  if (!prev_mean.valid()) return {inf.head_first.forward(tape, bind, pooled.context, ctx), pooled.weights};
  const ad::Var parts[] = {pooled.context, prev_mean};
  return {inf.head_next.forward(tape, bind, tape.concat(parts), ctx), pooled.weights};
}

PosteriorStatus infer_status(const CallEmbeddings& call, const Tensor* prev_mean, const InfParams& inf,
                             const ModelOptions& opts, std::vector<double>* exchange_weights) {
  if (call.size() == 0) throw InvalidInput("a call needs at least one embedded exchange");
  ad::Tape tape;
  const Binding bind{inf.params, nullptr};
  std::vector<ad::Var> qs, as;
  for (std::size_t k = 0; k < call.size(); ++k) {
    if (call.questions[k].size() != inf.dims.d_emb || call.answers[k].size() != inf.dims.d_emb) {
      throw InvalidInput("exchange " + std::to_string(k) + " embedding width does not match d_emb " +
                         std::to_string(inf.dims.d_emb));
    }
    qs.push_back(tape.constant(call.questions[k].data()));
    as.push_back(tape.constant(call.answers[k].data()));
  }
  ad::Var prev;
  if (prev_mean) {
    if (prev_mean->size() != inf.dims.d_s) throw InvalidInput("previous posterior mean has the wrong width");
    prev = tape.constant(prev_mean->data());
  }
  auto g = posterior_graph(tape, bind, inf, qs, as, prev, {}, opts);
  if (exchange_weights) {
    const auto& w = tape.value(g.exchange_weights);
    exchange_weights->assign(w.data().begin(), w.data().end());
  }
  return {tape.value(g.mean), inf.tau};
}

Tensor reparam_sample(const PosteriorStatus& post, const Tensor& noise) {
  if (noise.size() != post.mean.size()) throw InvalidInput("noise width does not match the posterior");
  Tensor out = post.mean;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += post.tau * noise[i];
  return out;
}

}  // namespace seqbelief
