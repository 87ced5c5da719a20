#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "seqbelief/error.hpp"
#include "seqbelief/gradcheck.hpp"
#include "seqbelief/objective.hpp"

using namespace seqbelief;

namespace {

constexpr double kLog2 = std::numbers::ln2;

double mean_sd(const std::vector<double>& v, double* mean_out = nullptr) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  if (mean_out) *mean_out = m;
  return std::sqrt(var / static_cast<double>(v.size() - 1));
}

/// Monte Carlo KL(N(mu, tau^2 I) || N(prior, I)) from `n` draws.
double kl_monte_carlo(const Tensor& mu, double tau, const Tensor& prior, std::size_t n, Rng& rng) {
  double acc = 0.0;
  const std::size_t d = mu.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor z = standard_normal(d, rng);
    double log_q = 0.0, log_p = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = mu[j] + tau * z[j];
      log_q += -0.5 * z[j] * z[j] - std::log(tau);
      log_p += -0.5 * (x - prior[j]) * (x - prior[j]);
    }
    acc += log_q - log_p;
  }
  return acc / static_cast<double>(n);
}

}  // namespace

TEST_SUITE("closed forms") {
  TEST_CASE("gaussian_loglik") {
    CHECK(gaussian_loglik(Tensor::vector({0.3}), Tensor::vector({0.3}), 1.0) == doctest::Approx(-0.9189385332).epsilon(1e-10));
    CHECK(gaussian_loglik(Tensor::vector({1.0}), Tensor::vector({0.0}), 1.0) == doctest::Approx(-1.4189385332).epsilon(1e-10));
    CHECK(gaussian_loglik(Tensor::vector({2, 5}), Tensor::vector({2, 5}), 2.0) ==
          doctest::Approx(-std::log(8.0 * std::numbers::pi)).epsilon(1e-12));
    CHECK(std::abs(gaussian_loglik(Tensor::zeros(2), Tensor::zeros(2), 2.0) - -3.2241714275) < 1e-9);
    CHECK_THROWS_AS(gaussian_loglik(Tensor::zeros(1), Tensor::zeros(1), 0.0), InvalidInput);
    CHECK_THROWS_AS(gaussian_loglik(Tensor::zeros(1), Tensor::zeros(2), 1.0), InvalidInput);
  }

  TEST_CASE("bernoulli_ll") {
    CHECK(bernoulli_ll(0.5, 1) == doctest::Approx(-kLog2).epsilon(1e-14));
    CHECK(bernoulli_ll(0.5, 0) == doctest::Approx(-kLog2).epsilon(1e-14));
    CHECK(std::abs(bernoulli_ll(0.9, 0) - std::log(0.1)) < 1e-12);
    CHECK(std::abs(bernoulli_ll(0.9, 0) - -2.302585093) < 1e-9);
    CHECK(std::abs(bernoulli_ll(1.0, 1)) < 1e-6);
    CHECK(std::isfinite(bernoulli_ll(1.0, 0)));
    CHECK(bernoulli_ll(0.0, 1) == doctest::Approx(std::log(1e-7)).epsilon(1e-12));
  }

  TEST_CASE("kl_gaussian examples") {
    CHECK(kl_gaussian(Tensor::vector({0.4, -1}), 1.0, Tensor::vector({0.4, -1})) == 0.0);
    CHECK(kl_gaussian(Tensor::vector({1, 0}), 1.0, Tensor::vector({0, 0})) == 0.5);
    CHECK(std::abs(kl_gaussian(Tensor::zeros(1), std::sqrt(0.5), Tensor::zeros(1)) - 0.5 * (0.5 - 1.0 + kLog2)) < 1e-15);
    CHECK(std::abs(kl_gaussian(Tensor::zeros(1), std::sqrt(0.5), Tensor::zeros(1)) - 0.0965735903) < 1e-9);
    CHECK_THROWS_AS(kl_gaussian(Tensor::zeros(1), 0.0, Tensor::zeros(1)), InvalidInput);
  }

  TEST_CASE("kl_gaussian agrees with Monte Carlo and is non-negative") {
    Rng rng(2024);
    CHECK(std::abs(kl_monte_carlo(Tensor::vector({1, 0}), 1.0, Tensor::zeros(2), 200000, rng) - 0.5) < 0.02);
    for (int i = 0; i < 5; ++i) {
      const std::size_t d = 1 + static_cast<std::size_t>(i % 3);
      const Tensor mu = standard_normal(d, rng);
      const Tensor prior = standard_normal(d, rng);
      const double tau = std::uniform_real_distribution<double>(0.4, 1.6)(rng);
      const double closed = kl_gaussian(mu, tau, prior);
      CHECK(closed >= 0.0);
      CHECK(std::abs(kl_monte_carlo(mu, tau, prior, 200000, rng) - closed) < 0.02);
    }
  }

  TEST_CASE("constraint_term") {
    const std::vector<double> half = {0.5};
    const std::vector<double> t0 = {0.0};
    CHECK(constraint_term(half, 1, t0, 365.0) == doctest::Approx(kLog2).epsilon(1e-14));
    const std::vector<double> tl = {365.0 * kLog2};
    CHECK(std::abs(constraint_term(half, 0, tl, 365.0) - 0.5 * kLog2) < 1e-15);
    const std::vector<double> sure = {1.0, 1.0};
    const std::vector<double> gaps = {10.0, 900.0};
    CHECK(constraint_term(sure, 1, gaps, 365.0) < 1e-6);
    const std::vector<double> rates = {0.2, 0.7};
    CHECK(std::abs(constraint_term(rates, 1, gaps, 100.0) -
                   (std::exp(-0.1) * -std::log(0.2) + std::exp(-9.0) * -std::log(0.7))) < 1e-14);
    CHECK_THROWS_AS(constraint_term(half, 1, t0, 0.0), InvalidInput);
    const std::vector<double> neg = {-1.0};
    CHECK_THROWS_AS(constraint_term(half, 1, neg, 365.0), InvalidInput);
  }
}

TEST_SUITE("elbo") {
  TEST_CASE("zero networks reduce to the component formulas") {
    const std::size_t d_emb = 6;
    auto m = fixtures::tiny_model(1, 3, d_emb, 2, 1.0, 1.0);
    zero_parameters(m.gen.params);
    zero_parameters(m.inf.params);
    auto c = fixtures::encoded({1}, d_emb, 2, 1, 5);
    c.calls[0].questions[0] = Tensor::zeros(d_emb);
    c.calls[0].answers[0] = Tensor::zeros(d_emb);
    const auto out = elbo(c, m.gen, m.inf, 99);
    const double rec = gaussian_loglik(Tensor::zeros(d_emb), Tensor::zeros(d_emb), 1.0);
    CHECK(std::abs(out.recon_q - rec) < 1e-12);
    CHECK(std::abs(out.recon_a - rec) < 1e-12);
    CHECK(std::abs(out.label_ll + kLog2) < 1e-12);
    CHECK(out.kl_total == 0.0);
    CHECK(std::abs(out.elbo - (2.0 * rec - kLog2)) < 1e-12);
    CHECK(std::abs(out.constraint - std::exp(-c.gaps_days[0] / 365.0) * kLog2) < 1e-12);
  }

  TEST_CASE("breakdown identities") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto m = fixtures::tiny_model(seed, 2, 5, 3);
      const auto c = fixtures::encoded({2, 1, 3}, 5, 3, static_cast<int>(seed % 2), seed + 100);
      const auto out = elbo(c, m.gen, m.inf, seed, {}, 0.25);
      CHECK(out.elbo == doctest::Approx(out.recon_q + out.recon_a + out.label_ll - out.kl_total).epsilon(1e-14));
      CHECK(out.weighted_total == doctest::Approx(-out.elbo + 0.25 * out.constraint).epsilon(1e-14));
      CHECK(out.kl_total >= 0.0);
      CHECK(out.constraint >= 0.0);
      CHECK(elbo(c, m.gen, m.inf, seed, {}, 0.0).weighted_total == -out.elbo);
    }
  }

  TEST_CASE("doubling sigma changes only the reconstruction terms") {
    auto m = fixtures::tiny_model(3, 2, 4, 2, 1.0);
    const auto c = fixtures::encoded({2, 2}, 4, 2, 1, 7);
    const auto a = elbo(c, m.gen, m.inf, 5);
    m.gen.sigma_obs = 2.0;
    const auto b = elbo(c, m.gen, m.inf, 5);
    CHECK(a.recon_q != b.recon_q);
    CHECK(a.recon_a != b.recon_a);
    CHECK(a.kl_total == b.kl_total);
    CHECK(a.label_ll == b.label_ll);
    CHECK(a.constraint == b.constraint);
  }

  TEST_CASE("flipping the label changes only label_ll and constraint") {
    auto m = fixtures::tiny_model(4, 3, 4, 2);
    auto c = fixtures::encoded({3, 1}, 4, 2, 1, 8);
    const auto a = elbo(c, m.gen, m.inf, 6);
    c.label = 0;
    const auto b = elbo(c, m.gen, m.inf, 6);
    CHECK(a.recon_q == b.recon_q);
    CHECK(a.recon_a == b.recon_a);
    CHECK(a.kl_total == b.kl_total);
    CHECK(a.label_ll != b.label_ll);
    CHECK(a.constraint != b.constraint);
  }

  TEST_CASE("kl is zero only when every posterior equals its prior") {
    auto m = fixtures::tiny_model(5, 2, 4, 2, 1.0, 1.0);
    zero_parameters(m.inf.params);
    CHECK(elbo(fixtures::encoded({2}, 4, 2, 1, 9), m.gen, m.inf, 1).kl_total == 0.0);
    // Later calls centre the prior on a random draw, so the posterior cannot match it.
    CHECK(elbo(fixtures::encoded({2, 2}, 4, 2, 1, 9), m.gen, m.inf, 1).kl_total > 0.0);
  }

  TEST_CASE("gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto m = fixtures::tiny_model(seed, 1 + seed % 4, 3 + seed % 5, 2);
      const std::vector<std::size_t> shape = {1 + seed % 3, 1 + (seed / 3) % 3, 2};
      const auto c = fixtures::encoded(std::vector<std::size_t>(shape.begin(), shape.begin() + 1 + seed % 3),
                                       m.gen.dims.d_emb, 2, static_cast<int>(seed % 2), seed);
      ElboOptions opts;
      opts.mc_samples = 1 + seed % 2;
      opts.model.literal_index_ranges = seed % 4 == 3;
      const double w = 0.5;
      const LossFn gen_loss = [&](const ParameterSet& p, GradientSet* g) {
        GenParams gen = m.gen;
        gen.params = p;
        return elbo_gradients(c, gen, m.inf, 42 + seed, opts, w, g, nullptr).weighted_total;
      };
      const LossFn inf_loss = [&](const ParameterSet& p, GradientSet* g) {
        InfParams inf = m.inf;
        inf.params = p;
        return elbo_gradients(c, m.gen, inf, 42 + seed, opts, w, nullptr, g).weighted_total;
      };
      CHECK(finite_diff_check(gen_loss, m.gen.params, 1e-5) < 1e-4);
      CHECK(finite_diff_check(inf_loss, m.inf.params, 1e-5) < 1e-4);
    }
  }

  TEST_CASE("generative gradients flow with the inference set frozen") {
    auto m = fixtures::tiny_model(6, 2, 4, 2);
    const auto c = fixtures::encoded({2, 2}, 4, 2, 1, 3);
    auto gg = GradientSet::zeros_like(m.gen.params);
    elbo_gradients(c, m.gen, m.inf, 1, {}, 1.0, &gg, nullptr);
    bool any = false;
    for (std::size_t i = 0; i < gg.size(); ++i) {
      for (double v : gg[i].data()) any = any || v != 0.0;
    }
    CHECK(any);
  }

  TEST_CASE("Monte Carlo spread shrinks as one over root M") {
    auto m = fixtures::tiny_model(7, 2, 4, 2);
    const auto c = fixtures::encoded({2, 3}, 4, 2, 1, 11);
    std::vector<double> sd;
    for (std::size_t M : {1u, 4u, 16u}) {
      ElboOptions opts;
      opts.mc_samples = M;
      std::vector<double> vals;
      for (std::uint64_t s = 0; s < 100; ++s) vals.push_back(elbo(c, m.gen, m.inf, 1000 + s, opts).elbo);
      sd.push_back(mean_sd(vals));
    }
    MESSAGE("sd at M=1,4,16: " << sd[0] << ", " << sd[1] << ", " << sd[2]);
    for (std::size_t i = 0; i + 1 < sd.size(); ++i) {
      const double ratio = sd[i] / sd[i + 1];
      CHECK(ratio > 2.0 / 1.5);
      CHECK(ratio < 2.0 * 1.5);
    }
  }

  TEST_CASE("bound holds against quadrature evidence") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto m = fixtures::tiny_model(seed + 50, 1, 3, 2, 1.0, 0.6);
      const auto c = fixtures::encoded({1}, 3, 2, static_cast<int>(seed % 2), seed + 60);
      const auto ev = oracle::evidence_1d(m.gen, m.inf, c);
      CHECK(ev.expected_elbo <= ev.log_evidence + 1e-6);

      // The single-draw estimate is the integrand at s = mu + tau * eps.
      Rng noise(77);
      const double eps = standard_normal(1, noise)[0];
      const double mu = infer_status(c.calls[0], nullptr, m.inf).mean[0];
      const auto one = elbo(c, m.gen, m.inf, 77);
      const double expect = oracle::joint_loglik_1d(m.gen, c, mu + m.inf.tau * eps) -
                            kl_gaussian(Tensor::vector({mu}), m.inf.tau, Tensor::zeros(1));
      CHECK(std::abs(one.elbo - expect) < 1e-9);

      ElboOptions many;
      many.mc_samples = 4000;
      const double mc = elbo(c, m.gen, m.inf, 5, many).elbo;
      CHECK(std::abs(mc - ev.expected_elbo) < 0.05 * (1.0 + std::abs(ev.expected_elbo)));
    }
  }

  TEST_CASE("invalid inputs") {
    auto m = fixtures::tiny_model(8, 2, 4, 2);
    auto c = fixtures::encoded({1}, 4, 2, 1, 1);
    ElboOptions opts;
    opts.mc_samples = 0;
    CHECK_THROWS_AS(elbo(c, m.gen, m.inf, 1, opts), InvalidInput);
    opts.mc_samples = 1;
    opts.lambda_days = 0.0;
    CHECK_THROWS_AS(elbo(c, m.gen, m.inf, 1, opts), InvalidInput);
    auto bad = c;
    bad.features = Tensor::zeros(5);
    CHECK_THROWS_AS(elbo(bad, m.gen, m.inf, 1), InvalidInput);
    bad = c;
    bad.calls.clear();
    bad.gaps_days.clear();
    CHECK_THROWS_AS(elbo(bad, m.gen, m.inf, 1), InvalidInput);
    auto other = fixtures::tiny_model(8, 3, 4, 2);
    CHECK_THROWS_AS(elbo(c, m.gen, other.inf, 1), InvalidInput);
  }
}
