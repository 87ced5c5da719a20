#include "seqbelief/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "json_codec.hpp"
#include "seqbelief/error.hpp"

namespace seqbelief {

namespace {

constexpr double kConstantTolerance = 1e-12;

std::vector<std::string> continuous_names() {
  std::vector<std::string> names = {"age_months",     "founders_count",  "rounds",       "raised_funding_musd",
                                    "investor_count", "active_products", "it_spend_musd"};
  for (std::size_t m = 0; m < kCallHistoryMonths; ++m) names.push_back("calls_last_24m[" + std::to_string(m) + "]");
  return names;
}

std::vector<double> raw_continuous(const FeatureVector& f) {
  std::vector<double> v = {f.age_months,     f.founders_count,  f.rounds,       f.raised_funding_musd,
                           f.investor_count, f.active_products, f.it_spend_musd};
  v.insert(v.end(), f.calls_last_24m.begin(), f.calls_last_24m.end());
  return v;
}

}  // namespace

ScalerManifest fit_scaler(std::span<const CompanyRecord> train, std::size_t d_emb) {
  if (train.empty()) throw InvalidInput("cannot fit a feature scaler on an empty training set");
  ScalerManifest s;
  s.continuous_names = continuous_names();
  s.log1p.assign(kContinuousFeatures, false);
  s.log1p[3] = true;  // raised_funding_musd
  s.log1p[6] = true;  // it_spend_musd

  std::vector<std::vector<double>> cols(kContinuousFeatures);
  std::set<std::string> hq, tm;
  for (const auto& r : train) {
    auto v = raw_continuous(r.features);
    for (std::size_t i = 0; i < v.size(); ++i) cols[i].push_back(s.log1p[i] ? std::log1p(v[i]) : v[i]);
    hq.insert(r.features.hq);
    tm.insert(r.features.trademark_class);
  }
  const double n = static_cast<double>(train.size());
  for (std::size_t i = 0; i < kContinuousFeatures; ++i) {
    double mean = 0.0;
    for (double x : cols[i]) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : cols[i]) var += (x - mean) * (x - mean);
    var /= n;  // population variance
    const double sd = std::sqrt(var);
    s.mean.push_back(mean);
    s.stddev.push_back(sd);
    s.constant.push_back(sd < kConstantTolerance);
  }
  s.hq_vocab.assign(hq.begin(), hq.end());
  s.trademark_vocab.assign(tm.begin(), tm.end());
  s.d_e = kContinuousFeatures + s.hq_vocab.size() + s.trademark_vocab.size();

  if (d_emb == 0) {
    for (const auto& r : train) {
      if (auto d = r.embedding_dim()) {
        d_emb = *d;
        break;
      }
    }
  }
  s.d_emb = d_emb;
  return s;
}

Tensor encode_features(const FeatureVector& f, const ScalerManifest& s) {
  if (s.mean.size() != kContinuousFeatures || s.stddev.size() != kContinuousFeatures ||
      s.constant.size() != kContinuousFeatures || s.log1p.size() != kContinuousFeatures) {
    throw InvalidInput("scaler manifest has the wrong number of continuous coordinates");
  }
  std::vector<double> out;
  out.reserve(s.d_e);
  const auto raw = raw_continuous(f);
  for (std::size_t i = 0; i < kContinuousFeatures; ++i) {
    if (s.constant[i]) {
      out.push_back(0.0);
      continue;
    }
    const double x = s.log1p[i] ? std::log1p(raw[i]) : raw[i];
    out.push_back((x - s.mean[i]) / s.stddev[i]);
  }
  for (const auto& v : s.hq_vocab) out.push_back(v == f.hq ? 1.0 : 0.0);
  for (const auto& v : s.trademark_vocab) out.push_back(v == f.trademark_class ? 1.0 : 0.0);
  if (out.size() != s.d_e) throw InvalidInput("scaler manifest d_e is inconsistent with its vocabularies");
  return Tensor::vector(std::move(out));
}

StandardizedFeatures standardize_features(std::span<const CompanyRecord> train, std::span<const CompanyRecord> all) {
  std::unordered_set<std::string> ids;
  for (const auto& r : all) ids.insert(r.company_id);
  for (const auto& r : train) {
    if (!ids.count(r.company_id)) {
      throw InvalidInput("training company '" + r.company_id + "' is not part of the full record set");
    }
  }
  StandardizedFeatures out;
  out.manifest = fit_scaler(train);
  out.features.reserve(all.size());
  for (const auto& r : all) out.features.push_back(encode_features(r.features, out.manifest));
  return out;
}

EncodedCompany encode_company(const CompanyRecord& r, const ScalerManifest& s) {
  EncodedCompany e;
  e.company_id = r.company_id;
  e.label = r.label;
  e.features = encode_features(r.features, s);
  for (const auto& c : r.calls) {
    CallEmbeddings ce;
    for (std::size_t k = 0; k < c.exchanges.size(); ++k) {
      const auto& x = c.exchanges[k];
      if (!x.embedded()) {
        throw InvalidInput("company '" + r.company_id + "' call '" + c.call_id + "' exchange " + std::to_string(k) +
                           " is missing embeddings; run ingest first");
      }
      if (x.q_emb->size() != s.d_emb || x.a_emb->size() != s.d_emb) {
        throw InvalidInput("company '" + r.company_id + "': embedding width " + std::to_string(x.q_emb->size()) +
                           " does not match d_emb " + std::to_string(s.d_emb));
      }
      ce.questions.push_back(*x.q_emb);
      ce.answers.push_back(*x.a_emb);
    }
    e.calls.push_back(std::move(ce));
    e.gaps_days.push_back(static_cast<double>(r.outcome_date.days - c.date.days));
    e.expert_types.push_back(c.expert_type);
  }
  return e;
}

std::vector<EncodedCompany> encode_companies(std::span<const CompanyRecord> records, const ScalerManifest& s) {
  std::vector<EncodedCompany> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(encode_company(r, s));
  return out;
}

// ---------------------------------------------------------------------------
// Manifest JSON

namespace codec {

json scaler_to_json(const ScalerManifest& s) {
  json cont = json::array();
  for (std::size_t i = 0; i < s.continuous_names.size(); ++i) {
    cont.push_back({{"name", s.continuous_names[i]},
                    {"mean", s.mean[i]},
                    {"std", s.stddev[i]},
                    {"constant", static_cast<bool>(s.constant[i])},
                    {"log1p", static_cast<bool>(s.log1p[i])}});
  }
  return {{"d_e", s.d_e},
          {"d_emb", s.d_emb},
          {"continuous", std::move(cont)},
          {"hq_vocab", s.hq_vocab},
          {"trademark_vocab", s.trademark_vocab}};
}

ScalerManifest scaler_from_json(const json& j) {
  try {
    ScalerManifest s;
    s.d_e = j.at("d_e").get<std::size_t>();
    s.d_emb = j.at("d_emb").get<std::size_t>();
    for (const auto& c : j.at("continuous")) {
      s.continuous_names.push_back(c.at("name").get<std::string>());
      s.mean.push_back(c.at("mean").get<double>());
      s.stddev.push_back(c.at("std").get<double>());
      s.constant.push_back(c.at("constant").get<bool>());
      s.log1p.push_back(c.at("log1p").get<bool>());
    }
    s.hq_vocab = j.at("hq_vocab").get<std::vector<std::string>>();
    s.trademark_vocab = j.at("trademark_vocab").get<std::vector<std::string>>();
    if (s.continuous_names.size() != kContinuousFeatures ||
        s.d_e != kContinuousFeatures + s.hq_vocab.size() + s.trademark_vocab.size()) {
      throw InvalidInput("scaler manifest dimensions are inconsistent");
    }
    return s;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed scaler manifest: ") + e.what());
  }
}

}  // namespace codec

std::string ScalerManifest::to_json() const { return codec::scaler_to_json(*this).dump(2); }

ScalerManifest ScalerManifest::from_json(std::string_view text) {
  try {
    return codec::scaler_from_json(codec::json::parse(text));
  } catch (const codec::json::parse_error& e) {
    throw InvalidInput(std::string("malformed scaler manifest: ") + e.what());
  }
}

}  // namespace seqbelief
