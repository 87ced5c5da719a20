#include "seqbelief/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqbelief/error.hpp"
#include "seqbelief/rng.hpp"

namespace seqbelief {

void SplitSpec::validate() const {
  if (!(train_frac > 0.0 && valid_frac > 0.0 && test_frac > 0.0)) {
    throw InvalidInput("split fractions must be positive");
  }
  if (std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9) {
    throw InvalidInput("split fractions must sum to 1");
  }
}

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  // Fisher-Yates with our own index draw so the order does not depend on the
  // standard library's std::shuffle implementation.
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

std::size_t take_positives(std::size_t n_split, std::size_t n, std::size_t positives, std::size_t pos_left,
                           std::size_t neg_left) {
  auto want = static_cast<std::size_t>(std::llround(static_cast<double>(n_split) * positives / n));
  want = std::min(want, pos_left);
  if (n_split - std::min(want, n_split) > neg_left) want = n_split - neg_left;
  return std::min(want, n_split);
}

}  // namespace

SplitIndices split_indices(std::span<const CompanyRecord> records, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = records.size();
  if (n < 3) throw InvalidInput("splitting needs at least 3 records, got " + std::to_string(n));
  const auto n_valid = static_cast<std::size_t>(std::floor(n * spec.valid_frac));
  const auto n_test = static_cast<std::size_t>(std::floor(n * spec.test_frac));

  SplitIndices out;
  if (spec.temporal) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return records[a].calls.front().date < records[b].calls.front().date;
    });
    const std::size_t n_train = n - n_valid - n_test;
    out.train.assign(order.begin(), order.begin() + n_train);
    out.valid.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
    out.test.assign(order.begin() + n_train + n_valid, order.end());
  } else if (spec.stratify) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < n; ++i) (records[i].label == 1 ? pos : neg).push_back(i);
    Rng rng(derive_seed(spec.seed, 1));
    shuffle(pos, rng);
    shuffle(neg, rng);
    std::size_t pi = 0, ni = 0;
    auto draw = [&](std::size_t size, std::vector<std::size_t>& dst) {
      const std::size_t p = take_positives(size, n, pos.size(), pos.size() - pi, neg.size() - ni);
      for (std::size_t k = 0; k < p; ++k) dst.push_back(pos[pi++]);
      for (std::size_t k = p; k < size; ++k) dst.push_back(neg[ni++]);
    };
    draw(n_valid, out.valid);
    draw(n_test, out.test);
    out.train.insert(out.train.end(), pos.begin() + pi, pos.end());
    out.train.insert(out.train.end(), neg.begin() + ni, neg.end());
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(spec.seed, 2));
    shuffle(order, rng);
    out.valid.assign(order.begin(), order.begin() + n_valid);
    out.test.assign(order.begin() + n_valid, order.begin() + n_valid + n_test);
    out.train.assign(order.begin() + n_valid + n_test, order.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.valid.begin(), out.valid.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

DatasetSplit split_dataset(std::span<const CompanyRecord> records, const SplitSpec& spec) {
  const auto idx = split_indices(records, spec);
  DatasetSplit out;
  for (auto i : idx.train) out.train.push_back(records[i]);
  for (auto i : idx.valid) out.valid.push_back(records[i]);
  for (auto i : idx.test) out.test.push_back(records[i]);
  return out;
}

}  // namespace seqbelief
