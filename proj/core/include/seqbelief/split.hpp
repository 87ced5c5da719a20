#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "seqbelief/records.hpp"

namespace seqbelief {

struct SplitSpec {
  double train_frac = 0.8;
  double valid_frac = 0.1;
  double test_frac = 0.1;
  std::uint64_t seed = 0;
  bool stratify = true;
  /// Order companies by their first call date and cut train/valid/test in
  /// that order instead of shuffling. Ignores `stratify`.
  bool temporal = false;

  void validate() const;
};

/// Index-level partition; each list is ascending.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
};

struct DatasetSplit {
  std::vector<CompanyRecord> train;
  std::vector<CompanyRecord> valid;
  std::vector<CompanyRecord> test;
};

/// Valid and test sizes are floor(n * frac); train takes the remainder.
SplitIndices split_indices(std::span<const CompanyRecord> records, const SplitSpec& spec);
DatasetSplit split_dataset(std::span<const CompanyRecord> records, const SplitSpec& spec);

}  // namespace seqbelief
