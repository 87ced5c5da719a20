#include "seqbelief/training.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "json_codec.hpp"
#include "seqbelief/error.hpp"
#include "seqbelief/metrics.hpp"
#include "seqbelief/optim.hpp"
#include "seqbelief/predict.hpp"

namespace seqbelief {

namespace {

constexpr std::uint64_t kInitStream = 0x1;
constexpr std::uint64_t kShuffleStream = 0x2;
constexpr std::uint64_t kNoiseStream = 0x3;
constexpr std::uint64_t kEvalStream = 0x4;
constexpr double kImprovementTolerance = 1e-4;
constexpr std::size_t kMovingWindow = 3;

ElboOptions elbo_options(const TrainConfig& cfg, bool training) {
  ElboOptions o;
  o.mc_samples = training ? cfg.mc_samples : cfg.eval_mc_samples;
  o.lambda_days = cfg.lambda_days;
  o.training = training;
  o.model = cfg.model_options();
  return o;
}

/// Sum of per-company gradients for one minibatch. Workers own contiguous
/// slices and the slices are added in order, so results depend only on jobs.
void batch_gradients(std::span<const EncodedCompany> data, std::span<const std::size_t> batch, const GenParams& gen,
                     const InfParams& inf, const TrainConfig& cfg, double w, EmStep step, std::size_t round,
                     GradientSet& out) {
  const ElboOptions opts = elbo_options(cfg, true);
  const ParameterSet& trained = step == EmStep::inference ? inf.params : gen.params;
  auto work = [&](std::size_t begin, std::size_t end, GradientSet& acc) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto idx = batch[i];
      const auto seed = derive_seed(derive_seed(cfg.seed, kNoiseStream), (round << 32) ^ (idx << 1) ^
                                                                              (step == EmStep::generative ? 1 : 0));
      try {
        if (step == EmStep::inference) {
          elbo_gradients(data[idx], gen, inf, seed, opts, w, nullptr, &acc);
        } else {
          elbo_gradients(data[idx], gen, inf, seed, opts, 0.0, &acc, nullptr);
        }
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " in round " + std::to_string(round));
      }
    }
  };
  const std::size_t jobs = std::min<std::size_t>(cfg.jobs, batch.size());
  out = GradientSet::zeros_like(trained);
  if (jobs <= 1) {
    work(0, batch.size(), out);
  } else {
    std::vector<GradientSet> partial(jobs, GradientSet::zeros_like(trained));
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> threads;
    const std::size_t chunk = (batch.size() + jobs - 1) / jobs;
    for (std::size_t j = 0; j < jobs; ++j) {
      threads.emplace_back([&, j] {
        try {
          work(std::min(batch.size(), j * chunk), std::min(batch.size(), (j + 1) * chunk), partial[j]);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (const auto& p : partial) out.add_scaled(p, 1.0);
  }
  out.scale(1.0 / static_cast<double>(batch.size()));
  if (!out.all_finite()) throw NumericError("non-finite gradient in round " + std::to_string(round));
}

void run_epoch(std::span<const EncodedCompany> data, GenParams& gen, InfParams& inf, AdamState& adam,
               const TrainConfig& cfg, EmStep step, std::size_t round, std::size_t epoch) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(derive_seed(cfg.seed, kShuffleStream), (round << 20) ^ (epoch << 1) ^
                                                                  (step == EmStep::generative ? 1 : 0)));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  GradientSet grads;
  for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
    const auto batch = std::span(order).subspan(b, std::min(cfg.batch_size, order.size() - b));
    batch_gradients(data, batch, gen, inf, cfg, cfg.w, step, round, grads);
    adam_step(adam, step == EmStep::inference ? inf.params : gen.params, grads);
  }
}

void append_rows(std::vector<HistoryRow>& history, std::size_t round, const SetEvaluation& tr,
                 const SetEvaluation& va) {
  history.push_back({round, "train", tr.elbo, tr.kl, tr.constraint, tr.f1});
  history.push_back({round, "valid", va.elbo, va.kl, va.constraint, va.f1});
}

}  // namespace

SetEvaluation evaluate_set(std::span<const EncodedCompany> data, const GenParams& gen, const InfParams& inf,
                           const TrainConfig& cfg) {
  SetEvaluation ev;
  if (data.empty()) return ev;
  const ElboOptions opts = elbo_options(cfg, false);
  std::vector<int> y, pred;
  PredictOptions popts;
  popts.band_samples = 1;
  popts.model = cfg.model_options();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto lb = elbo(data[i], gen, inf, derive_seed(derive_seed(cfg.seed, kEvalStream), i), opts, cfg.w);
    ev.elbo += lb.elbo;
    ev.kl += lb.kl_total;
    ev.constraint += lb.constraint;
    y.push_back(data[i].label);
    pred.push_back(predict_sequence(data[i], gen, inf, popts).final_rate() >= 0.5 ? 1 : 0);
  }
  const double n = static_cast<double>(data.size());
  ev.elbo /= n;
  ev.kl /= n;
  ev.constraint /= n;
  ev.f1 = classification_metrics(y, pred).f1;
  return ev;
}

Checkpoint initial_checkpoint(const TrainConfig& cfg, const ScalerManifest& scaler) {
  cfg.validate();
  if (scaler.d_emb == 0 || scaler.d_e == 0) throw InvalidInput("scaler manifest lacks d_emb or d_e");
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.scaler = scaler;
  const ModelDims dims = cfg.dims(scaler.d_emb, scaler.d_e);
  ckpt.gen = GenParams(dims, cfg.sigma_obs);
  ckpt.inf = InfParams(dims, cfg.tau);
  Rng rng(derive_seed(cfg.seed, kInitStream));
  const InitOptions init{cfg.init_gain, std::nullopt};
  ckpt.gen.initialize(rng, init);
  ckpt.inf.initialize(rng, init);
  return ckpt;
}

FitResult em_fit(std::span<const EncodedCompany> train, std::span<const EncodedCompany> valid,
                 const TrainConfig& cfg, const ScalerManifest& scaler, const EmHook& hook) {
  if (train.empty()) throw InvalidInput("training set is empty");
  FitResult result;
  result.checkpoint = initial_checkpoint(cfg, scaler);
  if (cfg.max_rounds == 0) return result;

  GenParams gen = result.checkpoint.gen;
  InfParams inf = result.checkpoint.inf;
  AdamState adam_inf = AdamState::for_params(inf.params, cfg.learning_rate);
  AdamState adam_gen = AdamState::for_params(gen.params, cfg.learning_rate);
  // Without a validation set, model selection falls back to the training set.
  const auto selection = valid.empty() ? train : valid;

  auto evaluate = [&](std::span<const EncodedCompany> data, std::size_t round) {
    try {
      return evaluate_set(data, gen, inf, cfg);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " in round " + std::to_string(round));
    }
  };

  std::vector<HistoryRow> history;
  auto tr = evaluate(train, 0);
  auto va = evaluate(selection, 0);
  append_rows(history, 0, tr, va);

  double best_elbo = va.elbo;
  std::deque<double> window{va.elbo};
  double best_avg = va.elbo;
  std::size_t stale = 0;

  for (std::size_t round = 1; round <= cfg.max_rounds; ++round) {
    for (std::size_t e = 0; e < cfg.inf_epochs_per_round; ++e) {
      run_epoch(train, gen, inf, adam_inf, cfg, EmStep::inference, round, e);
    }
    if (hook) hook(round, EmStep::inference, gen, inf);
    for (std::size_t e = 0; e < cfg.gen_epochs_per_round; ++e) {
      run_epoch(train, gen, inf, adam_gen, cfg, EmStep::generative, round, e);
    }
    if (hook) hook(round, EmStep::generative, gen, inf);

    tr = evaluate(train, round);
    va = evaluate(selection, round);
    append_rows(history, round, tr, va);
    result.rounds_run = round;
    if (va.elbo > best_elbo) {
      best_elbo = va.elbo;
      result.best_round = round;
      result.checkpoint.gen = gen;
      result.checkpoint.inf = inf;
    }

    window.push_back(va.elbo);
    if (window.size() > kMovingWindow) window.pop_front();
    const double avg = std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
    if (avg > best_avg + kImprovementTolerance) {
      best_avg = avg;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  result.checkpoint.history = std::move(history);
  return result;
}

FitResult train_model(std::span<const CompanyRecord> train, std::span<const CompanyRecord> valid,
                      const TrainConfig& cfg, const EmHook& hook) {
  if (train.empty()) throw InvalidInput("training set is empty");
  const ScalerManifest scaler = fit_scaler(train);
  if (scaler.d_emb == 0) throw InvalidInput("training records carry no embeddings; run ingest first");
  const auto tr = encode_companies(train, scaler);
  const auto va = encode_companies(valid, scaler);
  return em_fit(tr, va, cfg, scaler, hook);
}

std::vector<SweepRow> sweep(const SweepGrid& grid, std::span<const CompanyRecord> train,
                            std::span<const CompanyRecord> valid, const TrainConfig& base) {
  if (grid.empty()) throw InvalidInput("sweep grid has no axes");
  for (const auto& [name, values] : grid) {
    if (values.empty()) throw InvalidInput("sweep axis '" + name + "' has no values");
    TrainConfig probe = base;
    probe.set(name, values.front());
  }
  const ScalerManifest scaler = fit_scaler(train);
  const auto tr = encode_companies(train, scaler);
  const auto va = encode_companies(valid, scaler);

  std::vector<SweepRow> rows;
  std::vector<std::size_t> pos(grid.size(), 0);
  while (true) {
    SweepRow row;
    row.config = base;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      row.config.set(grid[a].first, grid[a].second[pos[a]]);
      row.point.emplace_back(grid[a].first, grid[a].second[pos[a]]);
    }
    auto fit = em_fit(tr, va, row.config, scaler);
    const auto ev = evaluate_set(va.empty() ? std::span<const EncodedCompany>(tr) : va, fit.checkpoint.gen,
                                 fit.checkpoint.inf, row.config);
    row.valid_f1 = ev.f1;
    row.valid_elbo = ev.elbo;
    row.best_round = fit.best_round;
    rows.push_back(std::move(row));

    bool advanced = false;
    for (std::size_t a = grid.size(); a-- > 0 && !advanced;) {
      advanced = ++pos[a] < grid[a].second.size();
      if (!advanced) pos[a] = 0;
    }
    if (!advanced) break;
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& x, const SweepRow& y) {
    return x.valid_f1 > y.valid_f1;
  });
  return rows;
}

SweepGrid parse_sweep_grid(std::string_view json_text) {
  try {
    const auto j = codec::json::parse(json_text);
    if (!j.is_object() || j.empty()) throw InvalidInput("sweep grid must be a non-empty JSON object");
    SweepGrid grid;
    for (const auto& [key, values] : j.items()) {
      if (!values.is_array() || values.empty()) {
        throw InvalidInput("sweep axis '" + key + "' must be a non-empty array");
      }
      grid.emplace_back(key, values.get<std::vector<double>>());
    }
    return grid;
  } catch (const codec::json::exception& e) {
    throw InvalidInput(std::string("malformed sweep grid: ") + e.what());
  }
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(17);
  if (rows.empty()) return "valid_f1,valid_elbo,best_round\n";
  for (const auto& [name, v] : rows.front().point) os << name << ',';
  os << "valid_f1,valid_elbo,best_round\n";
  for (const auto& r : rows) {
    for (const auto& [name, v] : r.point) os << v << ',';
    os << r.valid_f1 << ',' << r.valid_elbo << ',' << r.best_round << '\n';
  }
  return os.str();
}

}  // namespace seqbelief
