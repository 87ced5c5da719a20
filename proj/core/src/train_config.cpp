#include "seqbelief/train_config.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "json_codec.hpp"
#include "seqbelief/error.hpp"

namespace seqbelief {

namespace {

template <class Config, class F>
void for_each_field(Config& c, F&& f) {
  f("learning_rate", c.learning_rate);
  f("dropout", c.dropout);
  f("d_s", c.d_s);
  f("w", c.w);
  f("sigma_obs", c.sigma_obs);
  f("tau", c.tau);
  f("lambda_days", c.lambda_days);
  f("batch_size", c.batch_size);
  f("mc_samples", c.mc_samples);
  f("inf_epochs_per_round", c.inf_epochs_per_round);
  f("gen_epochs_per_round", c.gen_epochs_per_round);
  f("max_rounds", c.max_rounds);
  f("patience", c.patience);
  f("seed", c.seed);
  f("hidden_width", c.hidden_width);
  f("hidden_layers", c.hidden_layers);
  f("token_dim", c.token_dim);
  f("init_gain", c.init_gain);
  f("eval_mc_samples", c.eval_mc_samples);
  f("cross_exchange", c.cross_exchange);
  f("literal_index_ranges", c.literal_index_ranges);
  f("jobs", c.jobs);
}

void assign(std::string_view name, double& field, double v) {
  if (!std::isfinite(v)) throw InvalidInput("config field '" + std::string(name) + "' must be finite");
  field = v;
}

void assign(std::string_view name, std::uint64_t& field, double v) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.007199254740992e15) {
    throw InvalidInput("config field '" + std::string(name) + "' must be a non-negative integer");
  }
  field = static_cast<std::uint64_t>(v);
}

void assign(std::string_view name, bool& field, double v) {
  if (v != 0.0 && v != 1.0) throw InvalidInput("config field '" + std::string(name) + "' must be 0 or 1");
  field = v == 1.0;
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](const char* name, double v) {
    if (!(v > 0.0)) throw InvalidInput(std::string("config field '") + name + "' must be positive");
  };
  positive("learning_rate", learning_rate);
  positive("d_s", static_cast<double>(d_s));
  positive("sigma_obs", sigma_obs);
  positive("tau", tau);
  positive("lambda_days", lambda_days);
  positive("batch_size", static_cast<double>(batch_size));
  positive("mc_samples", static_cast<double>(mc_samples));
  positive("eval_mc_samples", static_cast<double>(eval_mc_samples));
  positive("hidden_width", static_cast<double>(hidden_width));
  positive("hidden_layers", static_cast<double>(hidden_layers));
  positive("patience", static_cast<double>(patience));
  positive("jobs", static_cast<double>(jobs));
  positive("init_gain", init_gain);
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidInput("config field 'dropout' must lie in [0, 1)");
  if (!(w >= 0.0)) throw InvalidInput("config field 'w' must be non-negative");
}

ModelDims TrainConfig::dims(std::size_t d_emb, std::size_t d_e) const {
  ModelDims d;
  d.d_emb = d_emb;
  d.d_e = d_e;
  d.d_s = d_s;
  d.hidden_width = hidden_width;
  d.hidden_layers = hidden_layers;
  d.token_dim = token_dim ? token_dim : hidden_width;
  d.dropout = dropout;
  return d;
}

void TrainConfig::set(std::string_view name, double value) {
  bool found = false;
  for_each_field(*this, [&](std::string_view key, auto& field) {
    if (key == name) {
      assign(name, field, value);
      found = true;
    }
  });
  if (!found) throw InvalidInput("unknown config field '" + std::string(name) + "'");
}

namespace codec {

json config_to_json(const TrainConfig& c) {
  json j = json::object();
  for_each_field(c, [&](const char* key, const auto& field) { j[key] = field; });
  return j;
}

TrainConfig config_from_json(const json& j, const TrainConfig& base) {
  if (!j.is_object()) throw InvalidInput("training config must be a JSON object");
  TrainConfig c = base;
  for (const auto& [key, value] : j.items()) {
    double v = 0.0;
    if (value.is_boolean()) {
      v = value.get<bool>() ? 1.0 : 0.0;
    } else if (value.is_number()) {
      v = value.get<double>();
    } else {
      throw InvalidInput("config field '" + key + "' must be a number or boolean");
    }
    if (key == "seed" && value.is_number_unsigned()) {
      c.seed = value.get<std::uint64_t>();
      continue;
    }
    c.set(key, v);
  }
  return c;
}

}  // namespace codec

std::string TrainConfig::to_json() const { return codec::config_to_json(*this).dump(2); }

TrainConfig TrainConfig::from_json(std::string_view text, const TrainConfig& base) {
  try {
    return codec::config_from_json(codec::json::parse(text), base);
  } catch (const codec::json::exception& e) {
    throw InvalidInput(std::string("malformed training config: ") + e.what());
  }
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "round,split,elbo,kl,constraint,f1\n";
  for (const auto& r : rows) {
    os << r.round << ',' << r.split << ',' << r.elbo << ',' << r.kl << ',' << r.constraint << ',' << r.f1 << '\n';
  }
  return os.str();
}

}  // namespace seqbelief
