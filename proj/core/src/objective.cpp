#include "seqbelief/objective.hpp"

#include <algorithm>
#include <cmath>

#include "seqbelief/error.hpp"

namespace seqbelief {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

}  // namespace

double gaussian_loglik(const Tensor& x, const Tensor& mu, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be positive");
  if (x.size() != mu.size()) throw InvalidInput("gaussian_loglik: shape mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - mu[i]) * (x[i] - mu[i]);
  const double d = static_cast<double>(x.size());
  return -0.5 * d * (kLog2Pi + 2.0 * std::log(sigma)) - sq / (2.0 * sigma * sigma);
}

double bernoulli_ll(double r, int y) {
  r = std::clamp(r, kProbClamp, 1.0 - kProbClamp);
  return y == 1 ? std::log(r) : std::log1p(-r);
}

double kl_gaussian(const Tensor& mu_q, double tau, const Tensor& prior_mean) {
  if (!(tau > 0.0)) throw InvalidInput("tau must be positive");
  if (mu_q.size() != prior_mean.size()) throw InvalidInput("kl_gaussian: shape mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < mu_q.size(); ++i) sq += (mu_q[i] - prior_mean[i]) * (mu_q[i] - prior_mean[i]);
  const double d = static_cast<double>(mu_q.size());
  const double t2 = tau * tau;
  return 0.5 * (d * t2 + sq - d - d * std::log(t2));
}

double constraint_term(std::span<const double> rates, int y, std::span<const double> gaps_days, double lambda_days) {
  if (!(lambda_days > 0.0)) throw InvalidInput("lambda_days must be positive");
  if (rates.size() != gaps_days.size()) throw InvalidInput("constraint_term: rates and gaps differ in length");
  double c = 0.0;
  for (std::size_t l = 0; l < rates.size(); ++l) {
    if (gaps_days[l] < 0.0) throw InvalidInput("time gaps must be non-negative");
    c += std::exp(-gaps_days[l] / lambda_days) * -bernoulli_ll(rates[l], y);
  }
  return c;
}

namespace graph {

ad::Var gaussian_loglik(ad::Tape& tape, ad::Var x, ad::Var mu, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be positive");
  const double d = static_cast<double>(tape.value(x).size());
  const ad::Var sq = tape.sq_norm(tape.sub(x, mu));
  return tape.add_scalar(tape.scale(sq, -1.0 / (2.0 * sigma * sigma)),
                         -0.5 * d * (kLog2Pi + 2.0 * std::log(sigma)));
}

ad::Var bernoulli_ll(ad::Tape& tape, ad::Var r, int y) {
  const ad::Var rc = tape.clamp(r, kProbClamp, 1.0 - kProbClamp);
  return y == 1 ? tape.log(rc) : tape.log(tape.add_scalar(tape.scale(rc, -1.0), 1.0));
}

ad::Var kl_gaussian(ad::Tape& tape, ad::Var mu_q, double tau, ad::Var prior_mean) {
  if (!(tau > 0.0)) throw InvalidInput("tau must be positive");
  const double d = static_cast<double>(tape.value(mu_q).size());
  const double t2 = tau * tau;
  const ad::Var sq = tape.sq_norm(tape.sub(mu_q, prior_mean));
  return tape.add_scalar(tape.scale(sq, 0.5), 0.5 * (d * t2 - d - d * std::log(t2)));
}

}  // namespace graph

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  recon_q += o.recon_q;
  recon_a += o.recon_a;
  label_ll += o.label_ll;
  kl_total += o.kl_total;
  constraint += o.constraint;
  elbo += o.elbo;
  weighted_total += o.weighted_total;
  return *this;
}

namespace {

struct ElboGraph {
  ad::Var recon_q, recon_a, label_ll, kl, constraint;
};

ad::Var add_all(ad::Tape& tape, const std::vector<ad::Var>& terms) {
  if (terms.empty()) return tape.scalar(0.0);
  return tape.sum(tape.stack(terms));
}

ElboGraph build_elbo(ad::Tape& tape, const EncodedCompany& c, const GenParams& gen, const InfParams& inf,
                     const Binding& gb, const Binding& ib, std::uint64_t noise_seed, const ElboOptions& opts) {
  const std::size_t L = c.calls.size();
  if (L == 0) throw InvalidInput("company '" + c.company_id + "' has no calls");
  if (opts.mc_samples == 0) throw InvalidInput("mc_samples must be >= 1");
  if (c.gaps_days.size() != L) throw InvalidInput("company '" + c.company_id + "' has inconsistent time gaps");
  if (c.features.size() != gen.dims.d_e) {
    throw InvalidInput("company '" + c.company_id + "' feature width " + std::to_string(c.features.size()) +
                       " does not match d_e " + std::to_string(gen.dims.d_e));
  }
  const std::size_t d_s = gen.dims.d_s;
  Rng noise_rng(noise_seed);
  Rng dropout_rng(derive_seed(noise_seed, 0xd0));
  const ForwardContext ctx{opts.training, opts.training ? &dropout_rng : nullptr};
  const ModelOptions& mo = opts.model;

  // Observed embeddings as constants.
  std::vector<std::vector<ad::Var>> qs(L), as(L);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& call = c.calls[l];
    if (call.size() == 0) throw InvalidInput("company '" + c.company_id + "' has an empty call");
    for (std::size_t k = 0; k < call.size(); ++k) {
      if (call.questions[k].size() != gen.dims.d_emb || call.answers[k].size() != gen.dims.d_emb) {
        throw InvalidInput("company '" + c.company_id + "': embedding width does not match d_emb " +
                           std::to_string(gen.dims.d_emb));
      }
      qs[l].push_back(tape.constant(call.questions[k].data()));
      as[l].push_back(tape.constant(call.answers[k].data()));
    }
  }
  const ad::Var e = tape.constant(c.features.data());

  // Posterior means, chained through the means.
  std::vector<ad::Var> mu(L);
  for (std::size_t l = 0; l < L; ++l) {
    mu[l] = posterior_graph(tape, ib, inf, qs[l], as[l], l ? mu[l - 1] : ad::Var{}, ctx, mo).mean;
  }

  std::vector<ad::Var> rq, ra, lab, kl, con;
  const ad::Var zero_prior = tape.constant(Tensor::zeros(d_s));
  for (std::size_t m = 0; m < opts.mc_samples; ++m) {
    std::vector<ad::Var> s(L);
    for (std::size_t l = 0; l < L; ++l) {
      Tensor eps = standard_normal(d_s, noise_rng);
      for (double& x : eps.data()) x *= inf.tau;
      s[l] = tape.add(mu[l], tape.constant(std::move(eps)));
      kl.push_back(graph::kl_gaussian(tape, mu[l], inf.tau, l ? s[l - 1] : zero_prior));

      const std::size_t K = qs[l].size();
      // Literal ranges keep q^{l,1} and exchanges 2..K-1 only.
      const bool literal = mo.literal_index_ranges;
      for (std::size_t k = 0; k < K; ++k) {
        const bool keep_q = !literal || k == 0 || k + 1 < K;
        const bool keep_a = !literal || (k > 0 && k + 1 < K);
        if (!keep_q && !keep_a) continue;
        const ad::Var pq = k ? qs[l][k - 1] : ad::Var{};
        const ad::Var pa = k ? as[l][k - 1] : ad::Var{};
        if (keep_q) {
          const ad::Var mq = question_mean_graph(tape, gb, gen, s[l], pq, pa, ctx, mo);
          rq.push_back(graph::gaussian_loglik(tape, qs[l][k], mq, gen.sigma_obs));
        }
        if (keep_a) {
          const ad::Var ma = answer_mean_graph(tape, gb, gen, s[l], pq, pa, qs[l][k], ctx, mo);
          ra.push_back(graph::gaussian_loglik(tape, as[l][k], ma, gen.sigma_obs));
        }
      }
    }
    for (std::size_t l = 0; l < L; ++l) {
      const ad::Var r = success_rate_graph(tape, gb, gen, std::span(s).first(l + 1), e, ctx).rate;
      const ad::Var ll = graph::bernoulli_ll(tape, r, c.label);
      con.push_back(tape.scale(ll, -std::exp(-c.gaps_days[l] / opts.lambda_days)));
      if (l + 1 == L) lab.push_back(ll);
    }
  }
  const double inv_m = 1.0 / static_cast<double>(opts.mc_samples);
  return {tape.scale(add_all(tape, rq), inv_m), tape.scale(add_all(tape, ra), inv_m),
          tape.scale(add_all(tape, lab), inv_m), tape.scale(add_all(tape, kl), inv_m),
          tape.scale(add_all(tape, con), inv_m)};
}

LossBreakdown run(const EncodedCompany& c, const GenParams& gen, const InfParams& inf, std::uint64_t noise_seed,
                  const ElboOptions& opts, double w, GradientSet* gg, GradientSet* ig) {
  if (!(opts.lambda_days > 0.0)) throw InvalidInput("lambda_days must be positive");
  if (gen.dims != inf.dims) throw InvalidInput("generative and inference dimensions differ");
  ad::Tape tape;
  const Binding gb{gen.params, gg};
  const Binding ib{inf.params, ig};
  const auto g = build_elbo(tape, c, gen, inf, gb, ib, noise_seed, opts);

  LossBreakdown out;
  out.recon_q = tape.item(g.recon_q);
  out.recon_a = tape.item(g.recon_a);
  out.label_ll = tape.item(g.label_ll);
  out.kl_total = tape.item(g.kl);
  out.constraint = tape.item(g.constraint);
  out.elbo = out.recon_q + out.recon_a + out.label_ll - out.kl_total;
  out.weighted_total = -out.elbo + w * out.constraint;
  if (!std::isfinite(out.weighted_total)) {
    throw NumericError("non-finite loss for company '" + c.company_id + "'");
  }
  if (gg || ig) {
    const ad::Var parts[] = {g.recon_q, g.recon_a, g.label_ll, tape.scale(g.kl, -1.0)};
    const ad::Var el = tape.sum(tape.stack(parts));
    const ad::Var total = tape.add(tape.scale(el, -1.0), tape.scale(g.constraint, w));
    tape.backward(total);
  }
  return out;
}

}  // namespace

LossBreakdown elbo(const EncodedCompany& company, const GenParams& gen, const InfParams& inf,
                   std::uint64_t noise_seed, const ElboOptions& opts, double w) {
  return run(company, gen, inf, noise_seed, opts, w, nullptr, nullptr);
}

LossBreakdown elbo_gradients(const EncodedCompany& company, const GenParams& gen, const InfParams& inf,
                             std::uint64_t noise_seed, const ElboOptions& opts, double w, GradientSet* gen_grads,
                             GradientSet* inf_grads) {
  return run(company, gen, inf, noise_seed, opts, w, gen_grads, inf_grads);
}

}  // namespace seqbelief
