#include "seqbelief/synth.hpp"

#include <cmath>
#include <cstdio>

#include "json_codec.hpp"
#include "seqbelief/error.hpp"
#include "seqbelief/io.hpp"

namespace seqbelief {

namespace {

constexpr std::uint64_t kReferenceSeed = 0x7e57da7a;
constexpr std::size_t kReferenceDraws = 4096;
constexpr std::uint64_t kGeneratorStream = 0x9e4e;
const char* const kHq[] = {"Austin", "Berlin", "Boston", "London", "San Francisco"};
const char* const kTrademark[] = {"009", "035", "042", "044"};

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void scale_columns(Tensor& w, std::size_t begin, std::size_t end, double factor) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = begin; c < end; ++c) w.at(r, c) *= factor;
  }
}

void scale_all(Tensor& t, double factor) {
  for (double& v : t.data()) v *= factor;
}

}  // namespace

void SynthShape::validate() const {
  if (min_calls < 1 || min_calls > max_calls) throw InvalidInput("synthetic call count range is invalid");
  if (min_exchanges < 1 || min_exchanges > max_exchanges) {
    throw InvalidInput("synthetic exchange count range is invalid");
  }
  if (min_call_gap_days < 1 || min_call_gap_days > max_call_gap_days) {
    throw InvalidInput("synthetic call gap range is invalid");
  }
  if (min_outcome_gap_days < 0 || min_outcome_gap_days > max_outcome_gap_days) {
    throw InvalidInput("synthetic outcome gap range is invalid");
  }
}

FeatureVector draw_raw_features(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::poisson_distribution<int> calls(0.6);
  FeatureVector f;
  f.age_months = static_cast<double>(uniform(rng, 6, 180));
  f.founders_count = static_cast<double>(uniform(rng, 1, 5));
  f.rounds = static_cast<double>(uniform(rng, 0, 8));
  f.raised_funding_musd = std::exp(1.5 + 1.2 * normal(rng));
  f.investor_count = static_cast<double>(uniform(rng, 0, 20));
  f.active_products = static_cast<double>(uniform(rng, 1, 6));
  f.it_spend_musd = std::exp(-1.0 + normal(rng));
  for (double& c : f.calls_last_24m) c = calls(rng);
  f.hq = kHq[uniform(rng, 0, std::size(kHq) - 1)];
  f.trademark_class = kTrademark[uniform(rng, 0, std::size(kTrademark) - 1)];
  return f;
}

const ScalerManifest& synth_reference_scaler() {
  static const ScalerManifest scaler = [] {
    Rng rng(kReferenceSeed);
    std::vector<CompanyRecord> refs(kReferenceDraws);
    for (auto& r : refs) r.features = draw_raw_features(rng);
    auto s = fit_scaler(refs);
    // Every category must be present so d_e is fixed.
    if (s.hq_vocab.size() != std::size(kHq) || s.trademark_vocab.size() != std::size(kTrademark)) {
      throw Error("synthetic reference scaler missed a category");
    }
    return s;
  }();
  return scaler;
}

GenParams make_synth_generator(const SynthConfig& cfg) {
  ModelDims dims;
  dims.d_emb = cfg.d_emb;
  dims.d_e = synth_reference_scaler().d_e;
  dims.d_s = cfg.d_s;
  dims.hidden_width = cfg.hidden_width;
  dims.hidden_layers = cfg.hidden_layers;
  dims.token_dim = cfg.hidden_width;
  dims.dropout = 0.0;
  GenParams gen(dims, cfg.sigma_obs);
  Rng rng(derive_seed(cfg.seed, kGeneratorStream));
  gen.initialize(rng, {cfg.init.gain, std::nullopt});

  const auto& init = cfg.init;
  auto& p = gen.params;
  Tensor& nn1_in = p[gen.success_head.weight_index(0)];
  scale_columns(nn1_in, 0, dims.d_s, init.status_scale);
  scale_columns(nn1_in, dims.d_s, dims.d_s + dims.d_e, init.feature_scale);
  scale_columns(p[gen.next_question.weight_index(0)], dims.d_s, dims.d_s + 2 * dims.d_emb, init.recurrent_scale);
  scale_columns(p[gen.next_answer.weight_index(0)], dims.d_s, dims.d_s + 2 * dims.d_emb, init.recurrent_scale);
  scale_all(p[gen.success_head.weight_index(gen.success_head.layer_count() - 1)], init.rate_scale);
  for (const Mlp* m : {&gen.first_question, &gen.first_answer, &gen.next_question, &gen.next_answer}) {
    scale_columns(p[m->weight_index(0)], 0, dims.d_s, init.emission_input_scale);
    scale_all(p[m->weight_index(m->layer_count() - 1)], init.emission_scale);
  }
  return gen;
}

SampledCompany synth_company(const GenParams& gen, const SynthConfig& cfg, std::size_t index) {
  cfg.shape.validate();
  const auto& shape = cfg.shape;
  Rng rng(derive_seed(cfg.seed, index));
  char id[32];
  std::snprintf(id, sizeof id, "-%06zu", index);

  CompanyLayout layout;
  layout.company_id = cfg.id_prefix + id;
  layout.features = draw_raw_features(rng);
  const std::size_t L = uniform(rng, shape.min_calls, shape.max_calls);
  Date date = Date::from_ymd(2015, 1, 1);
  date.days += static_cast<std::int32_t>(uniform(rng, 0, 1460));
  for (std::size_t l = 0; l < L; ++l) {
    if (l > 0) {
      date.days += static_cast<std::int32_t>(
          uniform(rng, static_cast<std::size_t>(shape.min_call_gap_days), static_cast<std::size_t>(shape.max_call_gap_days)));
    }
    layout.call_dates.push_back(date);
    layout.exchanges_per_call.push_back(uniform(rng, shape.min_exchanges, shape.max_exchanges));
    layout.expert_types.push_back(kExpertTypes[uniform(rng, 0, kExpertTypes.size() - 1)]);
  }
  layout.outcome_date = date;
  layout.outcome_date.days += static_cast<std::int32_t>(uniform(
      rng, static_cast<std::size_t>(shape.min_outcome_gap_days), static_cast<std::size_t>(shape.max_outcome_gap_days)));
  const Tensor e = encode_features(layout.features, synth_reference_scaler());
  return sample_company(gen, e, layout, rng, cfg.model);
}

SynthDataset synthesize(const GenParams& gen, const SynthConfig& cfg) {
  if (cfg.n_companies < 1) throw InvalidInput("synthetic dataset needs n >= 1");
  if (gen.dims.d_e != synth_reference_scaler().d_e) {
    throw InvalidInput("generator d_e does not match the synthetic feature layout");
  }
  SynthDataset out;
  for (std::size_t i = 0; i < cfg.n_companies; ++i) {
    auto c = synth_company(gen, cfg, i);
    out.records.push_back(std::move(c.record));
    out.latents.push_back(std::move(c.path));
  }
  return out;
}

std::string serialize_latents(std::span<const CompanyRecord> records, std::span<const LatentPath> latents) {
  if (records.size() != latents.size()) throw InvalidInput("records and latent paths differ in count");
  std::string out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    codec::json statuses = codec::json::array();
    for (const auto& s : latents[i].statuses) statuses.push_back(codec::tensor_values(s));
    out += codec::json{{"company_id", records[i].company_id},
                       {"statuses", std::move(statuses)},
                       {"success_rates", latents[i].success_rates}}
               .dump();
    out += '\n';
  }
  return out;
}

namespace {

using codec::json;

template <typename Fn>
void read_object(const json& j, const char* what, Fn&& field) {
  if (!j.is_object()) throw InvalidInput(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!field(key, value)) throw InvalidInput("unknown " + std::string(what) + " key '" + key + "'");
  }
}

template <typename T>
bool take(const std::string& key, const json& value, const char* name, T& out) {
  if (key != name) return false;
  out = value.get<T>();
  return true;
}

}  // namespace

std::string SynthConfig::to_json() const {
  const json shape_j = {{"min_calls", shape.min_calls},
                        {"max_calls", shape.max_calls},
                        {"min_exchanges", shape.min_exchanges},
                        {"max_exchanges", shape.max_exchanges},
                        {"min_call_gap_days", shape.min_call_gap_days},
                        {"max_call_gap_days", shape.max_call_gap_days},
                        {"min_outcome_gap_days", shape.min_outcome_gap_days},
                        {"max_outcome_gap_days", shape.max_outcome_gap_days}};
  const json init_j = {{"gain", init.gain},
                       {"status_scale", init.status_scale},
                       {"feature_scale", init.feature_scale},
                       {"recurrent_scale", init.recurrent_scale},
                       {"emission_scale", init.emission_scale},
                       {"emission_input_scale", init.emission_input_scale},
                       {"rate_scale", init.rate_scale}};
  const json j = {{"n_companies", n_companies},
                  {"seed", seed},
                  {"d_emb", d_emb},
                  {"d_s", d_s},
                  {"hidden_width", hidden_width},
                  {"hidden_layers", hidden_layers},
                  {"sigma_obs", sigma_obs},
                  {"cross_exchange", model.cross_exchange},
                  {"literal_index_ranges", model.literal_index_ranges},
                  {"id_prefix", id_prefix},
                  {"shape", shape_j},
                  {"init", init_j}};
  return j.dump(2);
}

SynthConfig SynthConfig::from_json(std::string_view text, const SynthConfig& base) {
  SynthConfig c = base;
  try {
    const json j = json::parse(text);
    read_object(j, "synth config", [&](const std::string& k, const json& v) {
      if (k == "shape") {
        auto& s = c.shape;
        read_object(v, "shape", [&](const std::string& sk, const json& sv) {
          return take(sk, sv, "min_calls", s.min_calls) || take(sk, sv, "max_calls", s.max_calls) ||
                 take(sk, sv, "min_exchanges", s.min_exchanges) || take(sk, sv, "max_exchanges", s.max_exchanges) ||
                 take(sk, sv, "min_call_gap_days", s.min_call_gap_days) ||
                 take(sk, sv, "max_call_gap_days", s.max_call_gap_days) ||
                 take(sk, sv, "min_outcome_gap_days", s.min_outcome_gap_days) ||
                 take(sk, sv, "max_outcome_gap_days", s.max_outcome_gap_days);
        });
        return true;
      }
      if (k == "init") {
        auto& g = c.init;
        read_object(v, "init", [&](const std::string& ik, const json& iv) {
          return take(ik, iv, "gain", g.gain) || take(ik, iv, "status_scale", g.status_scale) ||
                 take(ik, iv, "feature_scale", g.feature_scale) ||
                 take(ik, iv, "recurrent_scale", g.recurrent_scale) ||
                 take(ik, iv, "emission_scale", g.emission_scale) ||
                 take(ik, iv, "emission_input_scale", g.emission_input_scale) ||
                 take(ik, iv, "rate_scale", g.rate_scale);
        });
        return true;
      }
      return take(k, v, "n_companies", c.n_companies) || take(k, v, "seed", c.seed) ||
             take(k, v, "d_emb", c.d_emb) || take(k, v, "d_s", c.d_s) ||
             take(k, v, "hidden_width", c.hidden_width) || take(k, v, "hidden_layers", c.hidden_layers) ||
             take(k, v, "sigma_obs", c.sigma_obs) || take(k, v, "cross_exchange", c.model.cross_exchange) ||
             take(k, v, "literal_index_ranges", c.model.literal_index_ranges) ||
             take(k, v, "id_prefix", c.id_prefix);
    });
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed synth config: ") + e.what());
  }
  c.shape.validate();
  if (c.d_emb < 1 || c.d_s < 1 || c.hidden_width < 1) throw InvalidInput("synth config dimensions must be positive");
  if (!(c.sigma_obs > 0.0)) throw InvalidInput("synth config sigma_obs must be positive");
  return c;
}

void write_synth(const SynthDataset& data, const std::filesystem::path& dataset_path,
                 const std::filesystem::path& sidecar_path) {
  write_dataset(dataset_path, data.records);
  write_file_atomic(sidecar_path, serialize_latents(data.records, data.latents));
}

}  // namespace seqbelief
