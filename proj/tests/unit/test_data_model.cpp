#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "fixtures.hpp"
#include "seqbelief/error.hpp"
#include "seqbelief/features.hpp"
#include "seqbelief/io.hpp"
#include "seqbelief/records.hpp"
#include "seqbelief/split.hpp"

using namespace seqbelief;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / ("seqbelief_dm_" + name);
  write_file_atomic(p, content);
  return p;
}

std::vector<CompanyRecord> labelled(std::size_t pos, std::size_t neg) {
  std::vector<CompanyRecord> out;
  for (std::size_t i = 0; i < pos + neg; ++i) {
    out.push_back(fixtures::company("c" + std::to_string(i), i < pos ? 1 : 0, {1}, 2, i));
  }
  return out;
}

}  // namespace

TEST_SUITE("parse_dataset") {
  TEST_CASE("empty file gives no records") {
    CHECK(parse_dataset(temp_file("empty.jsonl", "")).empty());
    CHECK(parse_dataset_text("\n\n").empty());
  }

  TEST_CASE("minimal record parses") {
    const auto recs = parse_dataset(fs::path(SEQBELIEF_FIXTURES) / "minimal_record.jsonl");
    REQUIRE(recs.size() == 1);
    const auto& r = recs[0];
    CHECK(r.company_id == "acme");
    CHECK(r.label == 1);
    CHECK(r.outcome_date.iso() == "2021-06-30");
    REQUIRE(r.calls.size() == 1);
    CHECK(r.calls[0].expert_type == ExpertType::Customer);
    REQUIRE(r.calls[0].exchanges.size() == 1);
    CHECK(*r.calls[0].exchanges[0].a_emb == Tensor::vector({0.5, 0.25, -0.125, 1.0}));
    CHECK(r.features.calls_last_24m[23] == 1.0);
    CHECK(r.embedding_dim() == 4u);
  }

  TEST_CASE("call after outcome names the company") {
    auto r = fixtures::company("late-co", 0, {1}, 2, 1);
    r.outcome_date = r.calls[0].date;
    r.outcome_date.days -= 1;
    CHECK_THROWS_WITH_AS(validate_record(r), doctest::Contains("late-co"), ValidationError);
  }

  TEST_CASE("malformed line reports its number") {
    const std::string good = serialize_record(fixtures::company("a", 1, {1}, 2, 1));
    try {
      parse_dataset_text(good + "\n" + "{not json\n");
      FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.line() == 2);
    }
  }

  TEST_CASE("record invariants") {
    auto base = fixtures::company("x", 1, {2, 1}, 3, 5);
    SUBCASE("label outside {0,1}") {
      base.label = 2;
      CHECK_THROWS_WITH_AS(validate_record(base), doctest::Contains("label"), ValidationError);
    }
    SUBCASE("no calls") {
      base.calls.clear();
      CHECK_THROWS_AS(validate_record(base), ValidationError);
    }
    SUBCASE("empty call") {
      base.calls[1].exchanges.clear();
      CHECK_THROWS_AS(validate_record(base), ValidationError);
    }
    SUBCASE("calls not strictly ordered") {
      base.calls[1].date = base.calls[0].date;
      CHECK_THROWS_AS(validate_record(base), ValidationError);
    }
    SUBCASE("exchange with neither text nor embedding") {
      base.calls[0].exchanges[0].q_emb.reset();
      CHECK_THROWS_AS(validate_record(base), ValidationError);
    }
    SUBCASE("inconsistent embedding width") {
      base.calls[0].exchanges[1].a_emb = Tensor::vector({1, 2});
      CHECK_THROWS_AS(validate_record(base), ValidationError);
    }
    SUBCASE("negative covariate") {
      base.features.rounds = -1;
      CHECK_THROWS_WITH_AS(validate_record(base), doctest::Contains("rounds"), ValidationError);
    }
    SUBCASE("non-integer call count") {
      base.features.calls_last_24m[3] = 1.5;
      CHECK_THROWS_AS(validate_record(base), ValidationError);
    }
  }

  TEST_CASE("serialize then parse is the identity") {
    Rng rng(77);
    for (int i = 0; i < 20; ++i) {
      auto r = fixtures::company("rt" + std::to_string(i), i % 2, {static_cast<std::size_t>(1 + i % 3), 2}, 5, i);
      r.features.raised_funding_musd = std::uniform_real_distribution<double>(0, 1e3)(rng);
      r.calls[0].exchanges[0].question_text = "What's \"new\"?\né";
      CHECK(parse_record(serialize_record(r)) == r);
    }
  }

  TEST_CASE("unknown expert type is rejected") {
    auto text = serialize_record(fixtures::company("e", 0, {1}, 2, 2));
    const auto pos = text.find("\"expert_type\":\"");
    REQUIRE(pos != std::string::npos);
    const auto start = pos + 15;
    text.replace(start, text.find('"', start) - start, "Wizard");
    CHECK_THROWS_AS(parse_record(text), ValidationError);
  }
}

TEST_SUITE("standardize_features") {
  TEST_CASE("single record makes every continuous coordinate constant") {
    const std::vector<CompanyRecord> one = {fixtures::company("a", 1, {1}, 2, 3)};
    const auto s = standardize_features(one, one);
    for (std::size_t i = 0; i < kContinuousFeatures; ++i) {
      CHECK(s.manifest.constant[i]);
      CHECK(s.features[0][i] == 0.0);
    }
  }

  TEST_CASE("values 0 and 2 standardize to -1 and +1") {
    auto a = fixtures::company("a", 1, {1}, 2, 3);
    auto b = fixtures::company("b", 0, {1}, 2, 4);
    a.features.founders_count = 0;
    b.features.founders_count = 2;
    const std::vector<CompanyRecord> both = {a, b};
    const auto s = standardize_features(both, both);
    CHECK(s.features[0][1] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(s.features[1][1] == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("funding passes through log1p") {
    auto a = fixtures::company("a", 1, {1}, 2, 3);
    auto b = fixtures::company("b", 0, {1}, 2, 4);
    a.features.raised_funding_musd = 0.0;
    b.features.raised_funding_musd = std::exp(2.0) - 1.0;
    const std::vector<CompanyRecord> both = {a, b};
    const auto m = fit_scaler(both);
    CHECK(m.mean[3] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.stddev[3] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(encode_features(a.features, m)[3] == doctest::Approx(-1.0).epsilon(1e-12));
  }

  TEST_CASE("training statistics only, mean 0 and variance 1 on train") {
    std::vector<CompanyRecord> all;
    Rng rng(5);
    for (int i = 0; i < 40; ++i) {
      auto r = fixtures::company("c" + std::to_string(i), i % 2, {1}, 2, i);
      r.features.age_months = std::uniform_real_distribution<double>(0, 100)(rng);
      all.push_back(r);
    }
    const std::span<const CompanyRecord> train(all.data(), 30);
    const auto s = standardize_features(train, all);
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < 30; ++i) mean += s.features[i][0];
    mean /= 30.0;
    for (std::size_t i = 0; i < 30; ++i) var += (s.features[i][0] - mean) * (s.features[i][0] - mean);
    var /= 30.0;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.manifest == fit_scaler(train));
  }

  TEST_CASE("one-hot vocabularies are frozen from training") {
    auto a = fixtures::company("a", 1, {1}, 2, 1);  // Berlin
    auto b = fixtures::company("b", 0, {1}, 2, 2);  // Boston
    auto c = fixtures::company("c", 0, {1}, 2, 3);
    c.features.hq = "Tokyo";
    const std::vector<CompanyRecord> train = {a, b};
    const auto m = fit_scaler(train);
    CHECK(m.hq_vocab == std::vector<std::string>{"Berlin", "Boston"});
    CHECK(m.d_e == kContinuousFeatures + 2 + m.trademark_vocab.size());
    const Tensor e = encode_features(c.features, m);
    CHECK(e[kContinuousFeatures] == 0.0);
    CHECK(e[kContinuousFeatures + 1] == 0.0);
    CHECK(encode_features(a.features, m)[kContinuousFeatures] == 1.0);
  }

  TEST_CASE("encoding is idempotent under the same manifest") {
    const auto recs = labelled(5, 5);
    const auto m = fit_scaler(recs);
    const auto round = ScalerManifest::from_json(m.to_json());
    CHECK(round == m);
    for (const auto& r : recs) CHECK(encode_features(r.features, m) == encode_features(r.features, round));
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(fit_scaler(std::vector<CompanyRecord>{}), InvalidInput);
    const auto recs = labelled(2, 2);
    const std::vector<CompanyRecord> stranger = {fixtures::company("zz", 1, {1}, 2, 9)};
    CHECK_THROWS_AS(standardize_features(stranger, recs), InvalidInput);
  }
}

TEST_SUITE("split_dataset") {
  TEST_CASE("10 records at 0.8/0.1/0.1 give 8/1/1") {
    const auto recs = labelled(4, 6);
    SplitSpec spec;
    spec.seed = 11;
    const auto s = split_dataset(recs, spec);
    CHECK(s.train.size() == 8);
    CHECK(s.valid.size() == 1);
    CHECK(s.test.size() == 1);
  }

  TEST_CASE("same seed gives the same partition") {
    const auto recs = labelled(7, 13);
    SplitSpec spec;
    spec.seed = 3;
    const auto a = split_indices(recs, spec);
    const auto b = split_indices(recs, spec);
    CHECK(a.train == b.train);
    CHECK(a.valid == b.valid);
    CHECK(a.test == b.test);
  }

  TEST_CASE("stratified 6 positives + 4 negatives at 0.5/0.25/0.25") {
    const auto recs = labelled(6, 4);
    SplitSpec spec{0.5, 0.25, 0.25, 0, true, false};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      spec.seed = seed;
      const auto s = split_indices(recs, spec);
      auto positives = [&](const std::vector<std::size_t>& idx) {
        return static_cast<double>(std::count_if(idx.begin(), idx.end(), [&](auto i) { return recs[i].label == 1; }));
      };
      for (const auto* part : {&s.train, &s.valid, &s.test}) {
        CHECK(std::abs(positives(*part) - 0.6 * static_cast<double>(part->size())) <= 1.0);
      }
    }
  }

  TEST_CASE("splits are disjoint and exhaustive for every seed") {
    const auto recs = labelled(9, 28);
    for (bool stratify : {true, false}) {
      for (std::uint64_t seed = 0; seed < 40; ++seed) {
        SplitSpec spec{0.6, 0.2, 0.2, seed, stratify, false};
        const auto s = split_indices(recs, spec);
        std::set<std::size_t> seen;
        for (const auto* part : {&s.train, &s.valid, &s.test}) {
          CHECK(std::is_sorted(part->begin(), part->end()));
          for (auto i : *part) CHECK(seen.insert(i).second);
        }
        CHECK(seen.size() == recs.size());
      }
    }
  }

  TEST_CASE("temporal split orders by first call date") {
    auto recs = labelled(3, 3);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const int shift = static_cast<int>((recs.size() - i) * 100);
      for (auto& c : recs[i].calls) c.date.days += shift;
      recs[i].outcome_date.days += shift;
    }
    SplitSpec spec{0.5, 0.25, 0.25, 0, true, true};
    const auto s = split_indices(recs, spec);
    // Later indices have earlier calls, so they train.
    CHECK(s.train == std::vector<std::size_t>{2, 3, 4, 5});
    CHECK(s.valid == std::vector<std::size_t>{1});
    CHECK(s.test == std::vector<std::size_t>{0});
  }

  TEST_CASE("errors") {
    const auto recs = labelled(2, 2);
    CHECK_THROWS_AS(split_dataset(recs, SplitSpec{0.5, 0.3, 0.3, 0, true, false}), InvalidInput);
    CHECK_THROWS_AS(split_dataset(recs, SplitSpec{1.0, 0.0, 0.0, 0, true, false}), InvalidInput);
    CHECK_THROWS_AS(split_dataset(labelled(1, 1), SplitSpec{}), InvalidInput);
  }
}
