#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "seqbelief/checkpoint.hpp"
#include "seqbelief/embed.hpp"
#include "seqbelief/error.hpp"
#include "seqbelief/io.hpp"
#include "seqbelief/metrics.hpp"
#include "seqbelief/predict.hpp"
#include "seqbelief/split.hpp"
#include "seqbelief/synth.hpp"
#include "seqbelief/training.hpp"

namespace seqbelief::cli {

namespace fs = std::filesystem;

namespace {

/// Progress lines go to stderr as-is; the optional log file also gets a
/// timestamp, so only the log differs between identical runs.
class Log {
 public:
  explicit Log(std::ostream& err) : err_(err) {}

  void open(const fs::path& path) {
    file_.emplace(path, std::ios::app);
    if (!*file_) throw IoError("cannot open log file '" + path.string() + "'");
  }

  void info(const std::string& msg) {
    err_ << msg << '\n';
    if (file_) {
      const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
      std::tm tm{};
      gmtime_r(&now, &tm);
      *file_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << msg << '\n';
    }
  }

 private:
  std::ostream& err_;
  std::optional<std::ofstream> file_;
};

fs::path sibling(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

void apply_sets(TrainConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidInput("--set expects name=value, got '" + kv + "'");
    const std::string name = kv.substr(0, eq);
    const std::string text = kv.substr(eq + 1);
    if (text == "true" || text == "false") {
      cfg.set(name, text == "true" ? 1.0 : 0.0);
      continue;
    }
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size() || text.empty()) throw InvalidInput("--set " + name + ": '" + text + "' is not a number");
    cfg.set(name, value);
  }
}

TrainConfig load_config(const std::string& path, const std::vector<std::string>& sets,
                        const std::optional<std::uint64_t>& seed, std::size_t jobs) {
  TrainConfig cfg;
  if (!path.empty()) cfg = TrainConfig::from_json(read_file(path));
  apply_sets(cfg, sets);
  if (seed) cfg.seed = *seed;
  if (jobs) cfg.jobs = jobs;
  cfg.validate();
  return cfg;
}

std::unordered_map<std::string, int> label_index(const std::vector<CompanyRecord>& truth) {
  std::unordered_map<std::string, int> out;
  for (const auto& r : truth) out.emplace(r.company_id, r.label);
  return out;
}

double score_at(const BeliefTrajectory& t, std::size_t call) {
  if (t.calls.empty()) throw InvalidInput("trajectory for '" + t.company_id + "' has no calls");
  if (call == 0) return t.final_rate();
  return t.calls[std::min(call, t.calls.size()) - 1].rate_mean;
}

void scores_and_labels(const std::vector<BeliefTrajectory>& preds, const std::vector<CompanyRecord>& truth,
                       std::size_t call, std::vector<double>& scores, std::vector<int>& labels) {
  const auto idx = label_index(truth);
  for (const auto& t : preds) {
    const auto it = idx.find(t.company_id);
    if (it == idx.end()) throw InvalidInput("no ground truth for company '" + t.company_id + "'");
    scores.push_back(score_at(t, call));
    labels.push_back(it->second);
  }
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_file_atomic(path, text);
  }
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::string params, generator, out, latent, params_out;
};

void cmd_synth(const SynthArgs& a, Log& log) {
  SynthConfig cfg;
  if (!a.params.empty()) cfg = SynthConfig::from_json(read_file(a.params));
  cfg.n_companies = a.n;
  cfg.seed = a.seed;
  GenParams gen = a.generator.empty() ? make_synth_generator(cfg) : load_generator(a.generator);
  const auto data = synthesize(gen, cfg);
  const fs::path latent = a.latent.empty() ? sibling(a.out, ".latent.jsonl") : fs::path(a.latent);
  write_synth(data, a.out, latent);
  if (!a.params_out.empty()) save_generator(a.params_out, gen);
  log.info("synth: wrote " + std::to_string(data.records.size()) + " companies to " + a.out);
}

struct IngestArgs {
  std::string in, out, embedder = "mock", endpoint, cache_dir, scaler_out;
  std::size_t d_emb = 768;
  int max_words = 200;
};

void cmd_ingest(const IngestArgs& a, Log& log) {
  EmbedderConfig ec;
  ec.mode = a.embedder == "remote" ? EmbedMode::remote : EmbedMode::mock;
  ec.d_emb = a.d_emb;
  ec.max_summary_words = a.max_words;
  if (!a.endpoint.empty()) ec.remote_endpoint = a.endpoint;
  if (!a.cache_dir.empty()) {
    ec.cache_dir = a.cache_dir;
  } else if (const char* env = std::getenv("SEQBELIEF_CACHE_DIR"); env && *env) {
    ec.cache_dir = env;
  }
  if (ec.cache_dir) fs::create_directories(*ec.cache_dir);
  ec.validate();
  auto records = parse_dataset(a.in);
  Embedder embedder(ec);
  embedder.ingest(records);
  const auto scaler = fit_scaler(records, ec.d_emb);
  write_dataset(a.out, records);
  const fs::path scaler_path = a.scaler_out.empty() ? sibling(a.out, ".scaler.json") : fs::path(a.scaler_out);
  write_file_atomic(scaler_path, scaler.to_json());
  log.info("ingest: embedded " + std::to_string(records.size()) + " companies into " + a.out);
}

struct SplitArgs {
  std::string in, train_out, valid_out, test_out;
  double train_frac = 0.8, valid_frac = 0.1, test_frac = 0.1;
  std::uint64_t seed = 0;
  bool no_stratify = false, temporal = false;
};

void cmd_split(const SplitArgs& a, Log& log) {
  SplitSpec spec;
  spec.train_frac = a.train_frac;
  spec.valid_frac = a.valid_frac;
  spec.test_frac = a.test_frac;
  spec.seed = a.seed;
  spec.stratify = !a.no_stratify;
  spec.temporal = a.temporal;
  const auto records = parse_dataset(a.in);
  const auto parts = split_dataset(records, spec);
  write_dataset(a.train_out, parts.train);
  write_dataset(a.valid_out, parts.valid);
  write_dataset(a.test_out, parts.test);
  log.info("split: " + std::to_string(parts.train.size()) + "/" + std::to_string(parts.valid.size()) + "/" +
           std::to_string(parts.test.size()));
}

struct TrainArgs {
  std::string train, valid, config, out, history;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void cmd_train(const TrainArgs& a, std::size_t jobs, Log& log) {
  const TrainConfig cfg = load_config(a.config, a.sets, a.seed, jobs);
  const auto train = parse_dataset(a.train);
  const auto valid = parse_dataset(a.valid);
  auto hook = [&](std::size_t round, EmStep step, const GenParams&, const InfParams&) {
    if (step == EmStep::generative) log.info("train: round " + std::to_string(round) + " done");
  };
  const auto fit = train_model(train, valid, cfg, hook);
  save_checkpoint(a.out, fit.checkpoint);
  const fs::path hist = a.history.empty() ? sibling(a.out, ".history.csv") : fs::path(a.history);
  write_file_atomic(hist, history_csv(fit.checkpoint.history));
  log.info("train: best round " + std::to_string(fit.best_round) + " of " + std::to_string(fit.rounds_run));
}

struct PredictArgs {
  std::string data, checkpoint, out;
  std::size_t band_samples = 100;
  std::uint64_t band_seed = 0;
};

void cmd_predict(const PredictArgs& a, std::size_t jobs, Log& log) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto records = parse_dataset(a.data);
  const auto encoded = encode_companies(records, ckpt.scaler);
  PredictOptions opts;
  opts.band_samples = a.band_samples;
  opts.band_seed = a.band_seed;
  opts.model = ckpt.config.model_options();

  std::vector<BeliefTrajectory> out(encoded.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs ? jobs : 1, encoded.size()));
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < encoded.size(); i += workers) {
        out[i] = predict_sequence(encoded[i], ckpt.gen, ckpt.inf, opts);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  write_file_atomic(a.out, serialize_trajectories(out));
  log.info("predict: wrote " + std::to_string(out.size()) + " trajectories to " + a.out);
}

struct EvalArgs {
  std::string pred, truth, tune_on, tune_truth, cost_model, out;
  std::optional<double> threshold;
  std::size_t call = 0;
};

void cmd_eval(const EvalArgs& a, std::ostream& out, Log& log) {
  const auto preds = parse_trajectories(read_file(a.pred));
  const auto truth = parse_dataset(a.truth);
  std::vector<double> scores;
  std::vector<int> labels;
  scores_and_labels(preds, truth, a.call, scores, labels);

  double threshold = a.threshold.value_or(0.5);
  if (!a.tune_on.empty()) {
    const auto tune_preds = parse_trajectories(read_file(a.tune_on));
    const auto tune_truth = a.tune_truth.empty() ? truth : parse_dataset(a.tune_truth);
    std::vector<double> ts;
    std::vector<int> tl;
    scores_and_labels(tune_preds, tune_truth, a.call, ts, tl);
    threshold = tune_threshold(ts, tl);
    log.info("eval: tuned threshold " + std::to_string(threshold));
  }
  const CostModel cost = a.cost_model.empty() ? CostModel{} : cost_model_from_json(read_file(a.cost_model));
  std::vector<int> pred_labels;
  pred_labels.reserve(scores.size());
  for (double s : scores) pred_labels.push_back(s >= threshold ? 1 : 0);
  emit(evaluation_report_json(labels, pred_labels, scores, threshold, cost) + "\n", a.out, out);
}

struct SweepArgs {
  std::string grid, train, valid, config, out;
  std::vector<std::string> sets;
};

void cmd_sweep(const SweepArgs& a, std::size_t jobs, std::ostream& out, Log& log) {
  const TrainConfig base = load_config(a.config, a.sets, std::nullopt, jobs);
  const auto grid = parse_sweep_grid(read_file(a.grid));
  const auto train = parse_dataset(a.train);
  const auto valid = parse_dataset(a.valid);
  const auto rows = sweep(grid, train, valid, base);
  emit(sweep_csv(rows), a.out, out);
  log.info("sweep: " + std::to_string(rows.size()) + " configurations");
}

struct AttentionArgs {
  std::string trajectories, data, out;
};

struct MeanAcc {
  double sum = 0.0;
  std::size_t n = 0;
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

/// Three tables in one CSV: mean status-pooling weight received by calls of
/// each expert type and at each call position (read off the final call), and
/// mean exchange-pooling weight at each exchange position over all calls.
void cmd_attention(const AttentionArgs& a, std::ostream& out, Log& log) {
  const auto trajs = parse_trajectories(read_file(a.trajectories));
  const auto records = parse_dataset(a.data);
  std::unordered_map<std::string, const CompanyRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.company_id, &r);

  std::map<std::string, MeanAcc> by_type;
  std::map<std::size_t, MeanAcc> by_call, by_exchange;
  for (const auto& t : trajs) {
    const auto it = by_id.find(t.company_id);
    if (it == by_id.end()) throw InvalidInput("trajectory for unknown company '" + t.company_id + "'");
    const auto& rec = *it->second;
    if (rec.calls.size() != t.calls.size()) {
      throw InvalidInput("company '" + t.company_id + "': trajectory and data disagree on the number of calls");
    }
    if (t.calls.empty()) continue;
    const auto& weights = t.calls.back().status_attention;
    for (std::size_t j = 0; j < weights.size() && j < rec.calls.size(); ++j) {
      auto& ty = by_type[std::string(to_string(rec.calls[j].expert_type))];
      ty.sum += weights[j];
      ++ty.n;
      auto& ci = by_call[j + 1];
      ci.sum += weights[j];
      ++ci.n;
    }
    for (const auto& c : t.calls) {
      for (std::size_t k = 0; k < c.exchange_attention.size(); ++k) {
        auto& ek = by_exchange[k + 1];
        ek.sum += c.exchange_attention[k];
        ++ek.n;
      }
    }
  }
  std::string csv = "group,key,mean_weight,count\n";
  for (const auto& [k, m] : by_type) csv += "expert_type," + k + "," + fmt(m.sum / m.n) + "," + std::to_string(m.n) + "\n";
  for (const auto& [k, m] : by_call) {
    csv += "call_index," + std::to_string(k) + "," + fmt(m.sum / m.n) + "," + std::to_string(m.n) + "\n";
  }
  for (const auto& [k, m] : by_exchange) {
    csv += "exchange_index," + std::to_string(k) + "," + fmt(m.sum / m.n) + "," + std::to_string(m.n) + "\n";
  }
  emit(csv, a.out, out);
  log.info("attention-report: " + std::to_string(trajs.size()) + " trajectories");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequential belief model over expert-call transcripts", "seqbelief"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::size_t jobs = 0;
  std::string log_path;
  app.add_option("--jobs", jobs, "Worker thread cap")->check(CLI::NonNegativeNumber);
  app.add_option("--log", log_path, "Append timestamped progress lines to this file");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Sample a synthetic dataset and its latent sidecar");
  synth->add_option("--n", sa.n, "Number of companies")->required();
  synth->add_option("--seed", sa.seed, "Generator and sampling seed")->required();
  synth->add_option("--params", sa.params, "Synth config JSON");
  synth->add_option("--generator", sa.generator, "Use this generator file instead of drawing one");
  synth->add_option("--out", sa.out, "Dataset JSONL")->required();
  synth->add_option("--latent", sa.latent, "Latent sidecar JSONL (default <out>.latent.jsonl)");
  synth->add_option("--params-out", sa.params_out, "Write the generator parameters here");

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Embed exchanges and write the scaler manifest");
  ingest->add_option("--in", ia.in, "Raw dataset JSONL")->required();
  ingest->add_option("--out", ia.out, "Embedded dataset JSONL")->required();
  ingest->add_option("--embedder", ia.embedder, "mock or remote")->check(CLI::IsMember({"mock", "remote"}));
  ingest->add_option("--endpoint", ia.endpoint, "Summariser URL for the remote embedder");
  ingest->add_option("--d-emb", ia.d_emb, "Embedding width");
  ingest->add_option("--max-words", ia.max_words, "Summary word budget");
  ingest->add_option("--cache-dir", ia.cache_dir, "Embedding cache (default $SEQBELIEF_CACHE_DIR)");
  ingest->add_option("--scaler-out", ia.scaler_out, "Scaler manifest (default <out>.scaler.json)");

  SplitArgs pa;
  auto* split = app.add_subcommand("split", "Partition a dataset into train/valid/test");
  split->add_option("--in", pa.in)->required();
  split->add_option("--train-out", pa.train_out)->required();
  split->add_option("--valid-out", pa.valid_out)->required();
  split->add_option("--test-out", pa.test_out)->required();
  split->add_option("--train-frac", pa.train_frac);
  split->add_option("--valid-frac", pa.valid_frac);
  split->add_option("--test-frac", pa.test_frac);
  split->add_option("--seed", pa.seed);
  split->add_flag("--no-stratify", pa.no_stratify);
  split->add_flag("--temporal", pa.temporal, "Cut by first call date");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Fit the model by alternating EM steps");
  train->add_option("--train", ta.train)->required();
  train->add_option("--valid", ta.valid)->required();
  train->add_option("--config", ta.config, "TrainConfig JSON");
  train->add_option("--set", ta.sets, "Override a config field, name=value (repeatable)");
  train->add_option("--seed", ta.seed);
  train->add_option("--out", ta.out, "Checkpoint file")->required();
  train->add_option("--history", ta.history, "History CSV (default <out>.history.csv)");

  PredictArgs ra;
  auto* predict = app.add_subcommand("predict", "Belief trajectories for every company");
  predict->add_option("--data", ra.data)->required();
  predict->add_option("--checkpoint", ra.checkpoint)->required();
  predict->add_option("--out", ra.out)->required();
  predict->add_option("--band-samples", ra.band_samples)->check(CLI::PositiveNumber);
  predict->add_option("--band-seed", ra.band_seed);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Classification and portfolio report");
  eval->add_option("--pred", ea.pred, "Trajectory JSONL")->required();
  eval->add_option("--truth", ea.truth, "Dataset JSONL with labels")->required();
  auto* thr = eval->add_option("--threshold", ea.threshold);
  auto* tune = eval->add_option("--tune-on", ea.tune_on, "Pick the F1-optimal threshold on these trajectories");
  thr->excludes(tune);
  eval->add_option("--tune-truth", ea.tune_truth, "Labels for --tune-on (default --truth)")->needs(tune);
  eval->add_option("--cost-model", ea.cost_model, "Cost model JSON");
  eval->add_option("--call", ea.call, "Score at this 1-based call (0: final call)");
  eval->add_option("--out", ea.out, "Report path (default stdout)");

  SweepArgs wa;
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid search scored by validation F1");
  sweep_cmd->add_option("--grid", wa.grid)->required();
  sweep_cmd->add_option("--train", wa.train)->required();
  sweep_cmd->add_option("--valid", wa.valid)->required();
  sweep_cmd->add_option("--config", wa.config);
  sweep_cmd->add_option("--set", wa.sets);
  sweep_cmd->add_option("--out", wa.out, "CSV path (default stdout)");

  AttentionArgs aa;
  auto* attention = app.add_subcommand("attention-report", "Mean attention weights as CSV");
  attention->add_option("--trajectories", aa.trajectories)->required();
  attention->add_option("--data", aa.data)->required();
  attention->add_option("--out", aa.out, "CSV path (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }

  Log log(err);
  try {
    if (!log_path.empty()) log.open(log_path);
    if (*synth) cmd_synth(sa, log);
    if (*ingest) cmd_ingest(ia, log);
    if (*split) cmd_split(pa, log);
    if (*train) cmd_train(ta, jobs, log);
    if (*predict) cmd_predict(ra, jobs, log);
    if (*eval) cmd_eval(ea, out, log);
    if (*sweep_cmd) cmd_sweep(wa, jobs, out, log);
    if (*attention) cmd_attention(aa, out, log);
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitOk;
}

}  // namespace seqbelief::cli
