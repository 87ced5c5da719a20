#pragma once

// Small record builders shared by the unit suites.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "seqbelief/autodiff.hpp"
#include "seqbelief/features.hpp"
#include "seqbelief/genmodel.hpp"
#include "seqbelief/inference.hpp"
#include "seqbelief/objective.hpp"
#include "seqbelief/records.hpp"
#include "seqbelief/rng.hpp"
#include "seqbelief/train_config.hpp"

namespace fixtures {

using namespace seqbelief;

inline Exchange embedded_exchange(std::size_t d_emb, Rng& rng) {
  Exchange x;
  x.q_emb = standard_normal(d_emb, rng);
  x.a_emb = standard_normal(d_emb, rng);
  return x;
}

inline Exchange text_exchange(std::string q, std::string a) {
  Exchange x;
  x.question_text = std::move(q);
  x.answer_text = std::move(a);
  return x;
}

/// Company with `exchanges.size()` calls 30 days apart starting 2020-01-01;
/// call l has exchanges[l] embedded pairs. Outcome 400 days after the last call.
inline CompanyRecord company(const std::string& id, int label, const std::vector<std::size_t>& exchanges,
                             std::size_t d_emb, std::uint64_t seed) {
  Rng rng(seed);
  CompanyRecord r;
  r.company_id = id;
  r.label = label;
  r.features.age_months = 24 + static_cast<double>(seed % 50);
  r.features.founders_count = 2;
  r.features.rounds = static_cast<double>(seed % 4);
  r.features.raised_funding_musd = 1.5 + static_cast<double>(seed % 7);
  r.features.investor_count = 3;
  r.features.active_products = 1;
  r.features.it_spend_musd = 0.2;
  r.features.hq = seed % 2 ? "Berlin" : "Boston";
  r.features.trademark_class = seed % 3 ? "009" : "042";
  Date d = Date::from_ymd(2020, 1, 1);
  for (std::size_t l = 0; l < exchanges.size(); ++l) {
    Call c;
    c.call_id = id + "-c" + std::to_string(l + 1);
    c.date = d;
    c.expert_type = kExpertTypes[(seed + l) % kExpertTypes.size()];
    for (std::size_t k = 0; k < exchanges[l]; ++k) c.exchanges.push_back(embedded_exchange(d_emb, rng));
    r.calls.push_back(std::move(c));
    d.days += 30;
  }
  r.outcome_date = d;
  r.outcome_date.days += 370;
  return r;
}

/// Tiny model config: every width small, no dropout, fast learning rate.
inline TrainConfig tiny_config(std::size_t d_s = 3, std::size_t hidden = 5) {
  TrainConfig c;
  c.d_s = d_s;
  c.hidden_width = hidden;
  c.token_dim = hidden;
  c.dropout = 0.0;
  c.learning_rate = 1e-2;
  c.batch_size = 4;
  c.max_rounds = 3;
  c.tau = 0.5;
  return c;
}

/// Fill every tensor with a fixed non-trivial pattern.
inline void patterned(ParameterSet& params, double scale = 0.3) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double& v : params[i].storage()) {
      v = scale * (static_cast<double>((n * 7 + 3) % 11) - 5.0) / 5.0;
      ++n;
    }
  }
}

struct TinyModel {
  GenParams gen;
  InfParams inf;
};

/// Randomly initialised generative and inference sets with small widths.
inline TinyModel tiny_model(std::uint64_t seed, std::size_t d_s, std::size_t d_emb, std::size_t d_e,
                            double sigma = 1.0, double tau = 0.7) {
  ModelDims d;
  d.d_s = d_s;
  d.d_emb = d_emb;
  d.d_e = d_e;
  d.hidden_width = 4;
  d.hidden_layers = 1;
  d.token_dim = 4;
  d.dropout = 0.0;
  TinyModel m{GenParams(d, sigma), InfParams(d, tau)};
  Rng rng(seed);
  m.gen.initialize(rng);
  m.inf.initialize(rng);
  // Non-zero biases so every path is exercised.
  for (ParameterSet* p : {&m.gen.params, &m.inf.params}) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      if (p->name(i).ends_with(".b")) (*p)[i] = standard_normal((*p)[i].size(), rng);
    }
  }
  return m;
}

/// Model-ready company with random embeddings, built without a scaler.
inline EncodedCompany encoded(const std::vector<std::size_t>& exchanges, std::size_t d_emb, std::size_t d_e,
                              int label, std::uint64_t seed) {
  Rng rng(seed);
  EncodedCompany c;
  c.company_id = "enc" + std::to_string(seed);
  c.label = label;
  c.features = standard_normal(d_e, rng);
  for (std::size_t l = 0; l < exchanges.size(); ++l) {
    CallEmbeddings call;
    for (std::size_t k = 0; k < exchanges[l]; ++k) {
      call.questions.push_back(standard_normal(d_emb, rng));
      call.answers.push_back(standard_normal(d_emb, rng));
    }
    c.calls.push_back(std::move(call));
    c.gaps_days.push_back(60.0 * static_cast<double>(exchanges.size() - l) + 100.0);
    c.expert_types.push_back(kExpertTypes[l % kExpertTypes.size()]);
  }
  return c;
}

}  // namespace fixtures

/// Plain-loop reference evaluations addressed by parameter name.
namespace oracle {

using namespace seqbelief;

inline std::vector<double> affine(const Tensor& w, const Tensor& b, const std::vector<double>& x) {
  std::vector<double> y(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double acc = b[r];
    for (std::size_t c = 0; c < w.cols(); ++c) acc += w.at(r, c) * x[c];
    y[r] = acc;
  }
  return y;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// `prefix`.l0 .. l{layers}: GELU between layers, optional sigmoid at the end.
inline std::vector<double> mlp(const ParameterSet& p, const std::string& prefix, std::size_t layers,
                               std::vector<double> x, bool squash) {
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    x = affine(p[p.index_of(base + ".w")], p[p.index_of(base + ".b")], x);
    const bool last = l + 1 == layers;
    for (double& v : x) v = last ? (squash ? sigmoid(v) : v) : gelu(v);
  }
  return x;
}

struct Pooled {
  std::vector<double> context;
  std::vector<double> weights;
};

inline Pooled pool(const ParameterSet& p, const std::string& prefix, const std::vector<std::vector<double>>& tokens) {
  const Tensor& q = p[p.index_of(prefix + ".query")];
  const Tensor& wk = p[p.index_of(prefix + ".wk")];
  const Tensor& wv = p[p.index_of(prefix + ".wv")];
  const Tensor zk = Tensor::zeros(wk.rows());
  const Tensor zv = Tensor::zeros(wv.rows());
  std::vector<double> scores;
  for (const auto& t : tokens) {
    const auto k = affine(wk, zk, t);
    double s = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) s += q[i] * k[i];
    scores.push_back(s / std::sqrt(static_cast<double>(k.size())));
  }
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  Pooled out;
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  for (double s : scores) out.weights.push_back(std::exp(s - mx) / z);
  out.context.assign(wv.rows(), 0.0);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto v = affine(wv, zv, tokens[t]);
    for (std::size_t i = 0; i < v.size(); ++i) out.context[i] += out.weights[t] * v[i];
  }
  return out;
}

inline std::vector<double> cat(std::initializer_list<std::vector<double>> parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

/// log p(q, a, y | s) for a one-call, one-exchange company.
inline double joint_loglik_1d(const GenParams& gen, const EncodedCompany& c, double s_value) {
  const Tensor s = Tensor::vector({s_value});
  const Tensor& q = c.calls[0].questions[0];
  const Tensor& a = c.calls[0].answers[0];
  const std::vector<Tensor> statuses = {s};
  return gaussian_loglik(q, gen_question_mean(s, nullptr, nullptr, gen), gen.sigma_obs) +
         gaussian_loglik(a, gen_answer_mean(s, nullptr, nullptr, q, gen), gen.sigma_obs) +
         bernoulli_ll(gen_success_rate(statuses, c.features, gen).rate, c.label);
}

struct Evidence1d {
  double log_evidence = 0.0;    // log of the integral of N(s; 0, 1) p(x | s)
  double expected_elbo = 0.0;   // E_q[log p(x | s)] - KL(q || prior)
};

/// Trapezoid quadrature over s for d_s = 1, L = 1, K = 1.
inline Evidence1d evidence_1d(const GenParams& gen, const InfParams& inf, const EncodedCompany& c,
                              std::size_t points = 40001) {
  const double mu = infer_status(c.calls[0], nullptr, inf).mean[0];
  const double tau = inf.tau;
  const double two_pi = 2.0 * 3.14159265358979323846;
  auto log_normal = [&](double x, double m, double sd) {
    return -0.5 * std::log(two_pi * sd * sd) - (x - m) * (x - m) / (2.0 * sd * sd);
  };
  // Evidence: log-sum-exp over a grid wide enough for the prior.
  const double lo = -14.0, hi = 14.0, h = (hi - lo) / static_cast<double>(points - 1);
  std::vector<double> terms(points);
  double mx = -1e300;
  for (std::size_t i = 0; i < points; ++i) {
    const double s = lo + h * static_cast<double>(i);
    terms[i] = log_normal(s, 0.0, 1.0) + joint_loglik_1d(gen, c, s);
    mx = std::max(mx, terms[i]);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < points; ++i) acc += (i == 0 || i + 1 == points ? 0.5 : 1.0) * std::exp(terms[i] - mx);
  Evidence1d out;
  out.log_evidence = mx + std::log(acc * h);
  // Expected log-likelihood under q on mu +- 14 tau.
  const double ql = mu - 14.0 * tau, qh = mu + 14.0 * tau, qstep = (qh - ql) / static_cast<double>(points - 1);
  double e = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double s = ql + qstep * static_cast<double>(i);
    e += (i == 0 || i + 1 == points ? 0.5 : 1.0) * std::exp(log_normal(s, mu, tau)) * joint_loglik_1d(gen, c, s);
  }
  out.expected_elbo = e * qstep - kl_gaussian(Tensor::vector({mu}), tau, Tensor::zeros(1));
  return out;
}

}  // namespace oracle
