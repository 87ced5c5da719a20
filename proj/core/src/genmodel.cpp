#include "seqbelief/genmodel.hpp"

#include "seqbelief/error.hpp"

namespace seqbelief {

void ModelDims::validate() const {
  if (d_emb == 0 || d_e == 0 || d_s == 0 || hidden_width == 0 || token_dim == 0) {
    throw InvalidInput("model dimensions must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidInput("dropout must lie in [0, 1)");
}

GenParams::GenParams(const ModelDims& d, double sigma) : dims(d), sigma_obs(sigma) {
  dims.validate();
  if (!(sigma_obs > 0.0)) throw InvalidInput("sigma_obs must be positive");
  auto spec = [&](std::size_t in, std::size_t out, Squash squash) {
    return MlpSpec{in, dims.hidden(), out, squash, dims.dropout};
  };
  status_pool = AttentionPool(params, "gen.nn1.pool", dims.d_s, dims.d_s, dims.d_s);
  success_head = Mlp(params, "gen.nn1", spec(dims.d_s + dims.d_e, 1, Squash::unit_interval));
  first_question = Mlp(params, "gen.nn2", spec(dims.d_s, dims.d_emb, Squash::none));
  first_answer = Mlp(params, "gen.nn3", spec(dims.d_s + dims.d_emb, dims.d_emb, Squash::none));
  next_question = Mlp(params, "gen.nn4", spec(dims.d_s + 2 * dims.d_emb, dims.d_emb, Squash::none));
  next_answer = Mlp(params, "gen.nn5", spec(dims.d_s + 3 * dims.d_emb, dims.d_emb, Squash::none));
}

void GenParams::initialize(Rng& rng, const InitOptions& opts) {
  status_pool.initialize(params, rng, opts);
  for (const Mlp* m : {&success_head, &first_question, &first_answer, &next_question, &next_answer}) {
    m->initialize(params, rng, opts);
  }
}

SuccessGraph success_rate_graph(ad::Tape& tape, const Binding& bind, const GenParams& gen,
                                std::span<const ad::Var> statuses, ad::Var e, const ForwardContext& ctx) {
  if (statuses.empty()) throw InvalidInput("success rate needs at least one status");
  if (tape.value(e).size() != gen.dims.d_e) {
    throw InvalidInput("feature vector has length " + std::to_string(tape.value(e).size()) + ", expected d_e " +
                       std::to_string(gen.dims.d_e));
  }
  auto pooled = gen.status_pool.forward(tape, bind, statuses);
  const ad::Var parts[] = {pooled.context, e};
  return {gen.success_head.forward(tape, bind, tape.concat(parts), ctx), pooled.weights};
}

namespace {

bool has_prev(ad::Var prev_q, ad::Var prev_a) {
  if (prev_q.valid() != prev_a.valid()) {
    throw InvalidInput("previous question and answer must be both present or both absent");
  }
  return prev_q.valid();
}

}  // namespace

ad::Var question_mean_graph(ad::Tape& tape, const Binding& bind, const GenParams& gen, ad::Var s, ad::Var prev_q,
                            ad::Var prev_a, const ForwardContext& ctx, const ModelOptions& opts) {
  if (!has_prev(prev_q, prev_a) || !opts.cross_exchange) return gen.first_question.forward(tape, bind, s, ctx);
  const ad::Var parts[] = {s, prev_q, prev_a};
  return gen.next_question.forward(tape, bind, tape.concat(parts), ctx);
}

ad::Var answer_mean_graph(ad::Tape& tape, const Binding& bind, const GenParams& gen, ad::Var s, ad::Var prev_q,
                          ad::Var prev_a, ad::Var cur_q, const ForwardContext& ctx, const ModelOptions& opts) {
  if (!cur_q.valid()) throw InvalidInput("answer mean needs the current question");
  if (!has_prev(prev_q, prev_a) || !opts.cross_exchange) {
    const ad::Var parts[] = {s, cur_q};
    return gen.first_answer.forward(tape, bind, tape.concat(parts), ctx);
  }
  const ad::Var parts[] = {s, prev_q, prev_a, cur_q};
  return gen.next_answer.forward(tape, bind, tape.concat(parts), ctx);
}

Tensor sample_status(const std::optional<Tensor>& prev, std::size_t d_s, Rng& rng) {
  Tensor s = standard_normal(d_s, rng);
  if (prev) {
    if (prev->size() != d_s) throw InvalidInput("previous status has the wrong width");
    for (std::size_t i = 0; i < d_s; ++i) s[i] += (*prev)[i];
  }
  return s;
}

SuccessRate gen_success_rate(std::span<const Tensor> statuses, const Tensor& e, const GenParams& gen) {
  ad::Tape tape;
  const Binding bind{gen.params, nullptr};
  std::vector<ad::Var> vars;
  for (const auto& s : statuses) {
    if (s.size() != gen.dims.d_s) throw InvalidInput("status has the wrong width");
    vars.push_back(tape.constant(s.data()));
  }
  auto g = success_rate_graph(tape, bind, gen, vars, tape.constant(e.data()), {});
  const auto& w = tape.value(g.weights);
  return {tape.item(g.rate), std::vector<double>(w.data().begin(), w.data().end())};
}

namespace {

ad::Var opt_const(ad::Tape& tape, const Tensor* t) { return t ? tape.constant(t->data()) : ad::Var{}; }

}  // namespace

Tensor gen_question_mean(const Tensor& s, const Tensor* prev_q, const Tensor* prev_a, const GenParams& gen,
                         const ModelOptions& opts) {
  ad::Tape tape;
  const Binding bind{gen.params, nullptr};
  auto out = question_mean_graph(tape, bind, gen, tape.constant(s.data()), opt_const(tape, prev_q),
                                 opt_const(tape, prev_a), {}, opts);
  return tape.value(out);
}

Tensor gen_answer_mean(const Tensor& s, const Tensor* prev_q, const Tensor* prev_a, const Tensor& cur_q,
                       const GenParams& gen, const ModelOptions& opts) {
  ad::Tape tape;
  const Binding bind{gen.params, nullptr};
  auto out = answer_mean_graph(tape, bind, gen, tape.constant(s.data()), opt_const(tape, prev_q),
                               opt_const(tape, prev_a), tape.constant(cur_q.data()), {}, opts);
  return tape.value(out);
}

SampledCompany sample_company(const GenParams& gen, const Tensor& e, const CompanyLayout& layout, Rng& rng,
                              const ModelOptions& opts) {
  const std::size_t L = layout.exchanges_per_call.size();
  if (L == 0) throw InvalidInput("a synthetic company needs at least one call");
  if (layout.call_dates.size() != L || layout.expert_types.size() != L) {
    throw InvalidInput("company layout has inconsistent per-call lists");
  }
  for (auto k : layout.exchanges_per_call) {
    if (k == 0) throw InvalidInput("every call needs at least one exchange");
  }
  const double sigma = gen.sigma_obs;
  auto observe = [&](const Tensor& mean) {
    Tensor x = standard_normal(mean.size(), rng);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = mean[i] + sigma * x[i];
    return x;
  };

  SampledCompany out;
  CompanyRecord& rec = out.record;
  rec.company_id = layout.company_id;
  rec.outcome_date = layout.outcome_date;
  rec.features = layout.features;
  std::optional<Tensor> prev;
  for (std::size_t l = 0; l < L; ++l) {
    Tensor s = sample_status(prev, gen.dims.d_s, rng);
    out.path.statuses.push_back(s);
    out.path.success_rates.push_back(gen_success_rate(out.path.statuses, e, gen).rate);

    Call call;
    call.call_id = layout.company_id + "-c" + std::to_string(l + 1);
    call.date = layout.call_dates[l];
    call.expert_type = layout.expert_types[l];
    for (std::size_t k = 0; k < layout.exchanges_per_call[l]; ++k) {
      const Exchange* p = k > 0 ? &call.exchanges.back() : nullptr;
      const Tensor* pq = p ? &*p->q_emb : nullptr;
      const Tensor* pa = p ? &*p->a_emb : nullptr;
      Tensor q = observe(gen_question_mean(s, pq, pa, gen, opts));
      Tensor a = observe(gen_answer_mean(s, pq, pa, q, gen, opts));
      Exchange x;
      x.q_emb = std::move(q);
      x.a_emb = std::move(a);
      call.exchanges.push_back(std::move(x));
    }
    rec.calls.push_back(std::move(call));
    prev = std::move(s);
  }
  std::bernoulli_distribution label(out.path.success_rates.back());
  rec.label = label(rng) ? 1 : 0;
  return out;
}

}  // namespace seqbelief
