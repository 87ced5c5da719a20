#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqbelief/records.hpp"
#include "seqbelief/tensor.hpp"

namespace seqbelief {

/// Frozen standardisation for the external feature vector e.
///
/// Layout of the encoded vector: the 7 scalar covariates, the 24 monthly call
/// counts, then one-hot blocks for headquarters and trademark class. Funding
/// and IT spend pass through log1p before z-scoring. Coordinates with zero
/// training variance are flagged constant and encode to 0. Categories unseen
/// at fit time encode to an all-zero block.
struct ScalerManifest {
  std::size_t d_e = 0;
  std::size_t d_emb = 0;
  std::vector<std::string> continuous_names;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;
  std::vector<bool> log1p;
  std::vector<std::string> hq_vocab;
  std::vector<std::string> trademark_vocab;

  std::string to_json() const;
  static ScalerManifest from_json(std::string_view text);

  friend bool operator==(const ScalerManifest&, const ScalerManifest&) = default;
};

inline constexpr std::size_t kContinuousFeatures = 7 + kCallHistoryMonths;

/// Fit on training records only. `d_emb` of 0 means "take it from the records".
ScalerManifest fit_scaler(std::span<const CompanyRecord> train, std::size_t d_emb = 0);

Tensor encode_features(const FeatureVector& features, const ScalerManifest& scaler);

struct StandardizedFeatures {
  std::vector<Tensor> features;  // aligned with `all`
  ScalerManifest manifest;
};

/// Fit on `train` (which must be a subset of `all` by company_id) and encode `all`.
StandardizedFeatures standardize_features(std::span<const CompanyRecord> train, std::span<const CompanyRecord> all);

struct CallEmbeddings {
  std::vector<Tensor> questions;
  std::vector<Tensor> answers;

  std::size_t size() const noexcept { return questions.size(); }
};

/// Model-ready view of one company: standardized e, embedded calls, and the
/// day gaps from each call to the outcome date.
struct EncodedCompany {
  std::string company_id;
  int label = 0;
  Tensor features;
  std::vector<CallEmbeddings> calls;
  std::vector<double> gaps_days;
  std::vector<ExpertType> expert_types;
};

/// Requires every exchange to carry embeddings of width scaler.d_emb.
EncodedCompany encode_company(const CompanyRecord& record, const ScalerManifest& scaler);
std::vector<EncodedCompany> encode_companies(std::span<const CompanyRecord> records, const ScalerManifest& scaler);

}  // namespace seqbelief
