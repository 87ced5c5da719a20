#pragma once

#include <cstdint>
#include <span>

#include "seqbelief/autodiff.hpp"
#include "seqbelief/features.hpp"
#include "seqbelief/genmodel.hpp"
#include "seqbelief/inference.hpp"

namespace seqbelief {

inline constexpr double kProbClamp = 1e-7;

/// log N(x; mu, sigma^2 I)
double gaussian_loglik(const Tensor& x, const Tensor& mu, double sigma);
/// y log r + (1 - y) log(1 - r), with r clamped to [1e-7, 1 - 1e-7].
double bernoulli_ll(double r, int y);
/// KL(N(mu_q, tau^2 I) || N(prior_mean, I))
double kl_gaussian(const Tensor& mu_q, double tau, const Tensor& prior_mean);
/// sum_l exp(-t_l / lambda) * CE(r_l, y)
double constraint_term(std::span<const double> rates, int y, std::span<const double> gaps_days, double lambda_days);

namespace graph {
ad::Var gaussian_loglik(ad::Tape& tape, ad::Var x, ad::Var mu, double sigma);
ad::Var bernoulli_ll(ad::Tape& tape, ad::Var r, int y);
ad::Var kl_gaussian(ad::Tape& tape, ad::Var mu_q, double tau, ad::Var prior_mean);
}  // namespace graph

struct ElboOptions {
  std::size_t mc_samples = 1;
  double lambda_days = 365.0;
  /// Enables dropout (seeded from the noise seed).
  bool training = false;
  ModelOptions model;
};

struct LossBreakdown {
  double recon_q = 0.0;
  double recon_a = 0.0;
  double label_ll = 0.0;
  double kl_total = 0.0;
  double constraint = 0.0;
  double elbo = 0.0;
  double weighted_total = 0.0;  // -elbo + w * constraint

  LossBreakdown& operator+=(const LossBreakdown& o);
};

/// Monte Carlo ELBO of one company. Posterior means are chained call to call;
/// each of the `mc_samples` draws takes s~^l = mu^l + tau * eps^l with eps
/// from `noise_seed`, and sample-dependent terms are averaged over draws.
LossBreakdown elbo(const EncodedCompany& company, const GenParams& gen, const InfParams& inf,
                   std::uint64_t noise_seed, const ElboOptions& opts = {}, double w = 0.0);

/// As elbo(), and accumulates d(-elbo + w * constraint) into the non-null
/// gradient sets. A null set is treated as frozen.
LossBreakdown elbo_gradients(const EncodedCompany& company, const GenParams& gen, const InfParams& inf,
                             std::uint64_t noise_seed, const ElboOptions& opts, double w, GradientSet* gen_grads,
                             GradientSet* inf_grads);

}  // namespace seqbelief
