#include "seqbelief/predict.hpp"

#include <algorithm>
#include <cmath>

#include "json_codec.hpp"
#include "seqbelief/error.hpp"
#include "seqbelief/metrics.hpp"

namespace seqbelief {

namespace {

/// Linear-interpolation quantile of sorted data.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

BeliefTrajectory predict_sequence(const EncodedCompany& c, const GenParams& gen, const InfParams& inf,
                                  const PredictOptions& opts) {
  if (c.calls.empty()) throw InvalidInput("company '" + c.company_id + "' has no calls");
  if (gen.dims != inf.dims) throw InvalidInput("generative and inference dimensions differ");
  if (c.features.size() != gen.dims.d_e) {
    throw InvalidInput("company '" + c.company_id + "' feature width does not match the checkpoint d_e");
  }
  if (opts.band_samples == 0 || !(opts.band_lo >= 0.0 && opts.band_lo <= opts.band_hi && opts.band_hi <= 1.0)) {
    throw InvalidInput("invalid uncertainty band options");
  }
  for (const auto& call : c.calls) {
    for (std::size_t k = 0; k < call.size(); ++k) {
      if (call.questions[k].size() != gen.dims.d_emb || call.answers[k].size() != gen.dims.d_emb) {
        throw InvalidInput("company '" + c.company_id + "': embedding width does not match the checkpoint d_emb " +
                           std::to_string(gen.dims.d_emb));
      }
    }
  }

  BeliefTrajectory out;
  out.company_id = c.company_id;
  std::vector<Tensor> means;
  const std::uint64_t company_seed = derive_seed(opts.band_seed, fnv1a(c.company_id));
  for (std::size_t l = 0; l < c.calls.size(); ++l) {
    CallBelief b;
    b.call_index = l + 1;
    b.expert_type = c.expert_types.size() > l ? c.expert_types[l] : ExpertType::Customer;
    const auto post = infer_status(c.calls[l], means.empty() ? nullptr : &means.back(), inf, opts.model,
                                   &b.exchange_attention);
    means.push_back(post.mean);
    b.posterior_mean = post.mean;
    const auto rate = gen_success_rate(means, c.features, gen);
    b.rate_mean = rate.rate;
    b.status_attention = rate.weights;

    Rng rng(derive_seed(company_seed, l + 1));
    std::vector<double> draws;
    draws.reserve(opts.band_samples);
    std::vector<Tensor> sampled(l + 1);
    for (std::size_t m = 0; m < opts.band_samples; ++m) {
      for (std::size_t j = 0; j <= l; ++j) {
        sampled[j] = reparam_sample({means[j], inf.tau}, standard_normal(gen.dims.d_s, rng));
      }
      draws.push_back(gen_success_rate(sampled, c.features, gen).rate);
    }
    std::sort(draws.begin(), draws.end());
    b.rate_lo90 = std::min(quantile(draws, opts.band_lo), b.rate_mean);
    b.rate_hi90 = std::max(quantile(draws, opts.band_hi), b.rate_mean);
    out.calls.push_back(std::move(b));
  }
  return out;
}

std::vector<int> classify(const BeliefTrajectory& t, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidInput("threshold must lie in (0, 1)");
  std::vector<int> out;
  for (const auto& b : t.calls) out.push_back(b.rate_mean >= threshold ? 1 : 0);
  return out;
}

double tune_threshold(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty()) throw InvalidInput("threshold tuning needs validation data");
  if (scores.size() != labels.size()) throw InvalidInput("scores and labels differ in length");
  std::vector<double> candidates(scores.begin(), scores.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best_t = candidates.front();
  double best_f1 = -1.0;
  std::vector<int> pred(scores.size());
  for (double t : candidates) {
    for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= t ? 1 : 0;
    const double f1 = classification_metrics(labels, pred).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = t;
    }
  }
  // Keep the threshold usable by classify().
  return std::clamp(best_t, 1e-12, 1.0 - 1e-12);
}

namespace codec {

json trajectory_to_json(const BeliefTrajectory& t) {
  json calls = json::array();
  for (const auto& b : t.calls) {
    calls.push_back({{"call_index", b.call_index},
                     {"expert_type", std::string(to_string(b.expert_type))},
                     {"posterior_mean", tensor_values(b.posterior_mean)},
                     {"rate_mean", b.rate_mean},
                     {"rate_lo90", b.rate_lo90},
                     {"rate_hi90", b.rate_hi90},
                     {"status_attention", b.status_attention},
                     {"exchange_attention", b.exchange_attention}});
  }
  return {{"company_id", t.company_id}, {"calls", std::move(calls)}};
}

}  // namespace codec

std::string serialize_trajectory(const BeliefTrajectory& t) { return codec::trajectory_to_json(t).dump(); }

BeliefTrajectory parse_trajectory(std::string_view json_line, std::size_t line) {
  try {
    const auto j = codec::json::parse(json_line);
    BeliefTrajectory t;
    t.company_id = j.at("company_id").get<std::string>();
    for (const auto& c : j.at("calls")) {
      CallBelief b;
      b.call_index = c.at("call_index").get<std::size_t>();
      const auto type = parse_expert_type(c.at("expert_type").get<std::string>());
      if (!type) throw ValidationError(line, "unknown expert_type in trajectory '" + t.company_id + "'");
      b.expert_type = *type;
      b.posterior_mean = codec::tensor_from_values(c.at("posterior_mean"), "posterior_mean");
      b.rate_mean = c.at("rate_mean").get<double>();
      b.rate_lo90 = c.at("rate_lo90").get<double>();
      b.rate_hi90 = c.at("rate_hi90").get<double>();
      b.status_attention = c.at("status_attention").get<std::vector<double>>();
      b.exchange_attention = c.at("exchange_attention").get<std::vector<double>>();
      t.calls.push_back(std::move(b));
    }
    if (t.calls.empty()) throw ValidationError(line, "trajectory '" + t.company_id + "' has no calls");
    return t;
  } catch (const codec::json::exception& e) {
    throw ValidationError(line, std::string("malformed trajectory: ") + e.what());
  }
}

std::string serialize_trajectories(std::span<const BeliefTrajectory> ts) {
  std::string out;
  for (const auto& t : ts) {
    out += serialize_trajectory(t);
    out += '\n';
  }
  return out;
}

std::vector<BeliefTrajectory> parse_trajectories(std::string_view text) {
  std::vector<BeliefTrajectory> out;
  std::size_t line = 0;
  while (!text.empty()) {
    ++line;
    const auto nl = text.find('\n');
    const auto row = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (row.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    out.push_back(parse_trajectory(row, line));
  }
  return out;
}

}  // namespace seqbelief
