#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "seqbelief/error.hpp"
#include "seqbelief/metrics.hpp"
#include "seqbelief/optim.hpp"
#include "seqbelief/predict.hpp"
#include "seqbelief/synth.hpp"

using namespace seqbelief;

namespace {

EncodedCompany prefix(const EncodedCompany& c, std::size_t l) {
  EncodedCompany p = c;
  p.calls.resize(l);
  p.gaps_days.resize(l);
  p.expert_types.resize(l);
  return p;
}

}  // namespace

TEST_SUITE("predict_sequence") {
  TEST_CASE("one entry per call and the prefix property") {
    const auto m = fixtures::tiny_model(1, 3, 5, 2);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto c = fixtures::encoded({2, 1, 3, 2}, 5, 2, 1, seed);
      const auto full = predict_sequence(c, m.gen, m.inf);
      REQUIRE(full.calls.size() == 4);
      for (std::size_t l = 1; l <= 4; ++l) {
        const auto part = predict_sequence(prefix(c, l), m.gen, m.inf);
        REQUIRE(part.calls.size() == l);
        CHECK(part.calls.back() == full.calls[l - 1]);
        CHECK(full.calls[l - 1].call_index == l);
      }
    }
  }

  TEST_CASE("zero networks give one half with a degenerate band") {
    auto m = fixtures::tiny_model(2, 3, 5, 2);
    zero_parameters(m.gen.params);
    zero_parameters(m.inf.params);
    const auto t = predict_sequence(fixtures::encoded({2, 3}, 5, 2, 0, 4), m.gen, m.inf);
    for (const auto& b : t.calls) {
      CHECK(b.rate_mean == 0.5);
      CHECK(b.rate_lo90 == 0.5);
      CHECK(b.rate_hi90 == 0.5);
    }
  }

  TEST_CASE("band brackets the mean; attention vectors are distributions") {
    const auto m = fixtures::tiny_model(3, 2, 4, 2, 1.0, 0.8);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto t = predict_sequence(fixtures::encoded({3, 2, 4}, 4, 2, 1, seed), m.gen, m.inf);
      for (const auto& b : t.calls) {
        CHECK(b.rate_lo90 <= b.rate_mean);
        CHECK(b.rate_mean <= b.rate_hi90);
        CHECK(b.rate_lo90 < b.rate_hi90);
        CHECK(b.status_attention.size() == b.call_index);
        double s = 0.0, x = 0.0;
        for (double w : b.status_attention) s += w;
        for (double w : b.exchange_attention) x += w;
        CHECK(std::abs(s - 1.0) < 1e-12);
        CHECK(std::abs(x - 1.0) < 1e-12);
      }
    }
  }

  TEST_CASE("bands are reproducible and follow the band seed") {
    const auto m = fixtures::tiny_model(4, 2, 4, 2);
    const auto c = fixtures::encoded({2, 2}, 4, 2, 1, 9);
    PredictOptions o;
    CHECK(predict_sequence(c, m.gen, m.inf, o) == predict_sequence(c, m.gen, m.inf, o));
    PredictOptions other = o;
    other.band_seed = 123;
    const auto a = predict_sequence(c, m.gen, m.inf, o);
    const auto b = predict_sequence(c, m.gen, m.inf, other);
    CHECK(a.calls[1].rate_mean == b.calls[1].rate_mean);
    CHECK(a.calls[1].rate_hi90 != b.calls[1].rate_hi90);
  }

  TEST_CASE("flipping the label changes nothing") {
    const auto m = fixtures::tiny_model(5, 3, 4, 2);
    auto c = fixtures::encoded({2, 3, 1}, 4, 2, 1, 10);
    const auto before = serialize_trajectory(predict_sequence(c, m.gen, m.inf));
    c.label = 0;
    c.gaps_days = {1.0, 2.0, 3.0};
    CHECK(serialize_trajectory(predict_sequence(c, m.gen, m.inf)) == before);
  }

  TEST_CASE("mismatched checkpoint is rejected") {
    const auto m = fixtures::tiny_model(6, 3, 4, 2);
    CHECK_THROWS_AS(predict_sequence(fixtures::encoded({2}, 5, 2, 1, 1), m.gen, m.inf), InvalidInput);
    CHECK_THROWS_AS(predict_sequence(fixtures::encoded({2}, 4, 3, 1, 1), m.gen, m.inf), InvalidInput);
    CHECK_THROWS_AS(predict_sequence(fixtures::encoded({}, 4, 2, 1, 1), m.gen, m.inf), InvalidInput);
  }

  TEST_CASE("later calls rank companies better under the generating model") {
    SynthConfig s;
    s.n_companies = 600;
    s.seed = 21;
    s.shape.min_calls = 2;
    s.init.rate_scale = 200.0;
    s.init.status_scale = 0.2;
    s.init.feature_scale = 0.06;
    s.init.recurrent_scale = 0.3;
    s.init.emission_scale = 6.0;
    const GenParams gen = make_synth_generator(s);
    const auto data = synthesize(gen, s);
    const auto enc = encode_companies(data.records, [&] {
      ScalerManifest sc = synth_reference_scaler();
      sc.d_emb = s.d_emb;
      return sc;
    }());
    const std::span<const EncodedCompany> train(enc.data(), 300), test(enc.data() + 300, 300);

    // Fit only the inference set; the generator is the true one.
    InfParams inf(gen.dims, 0.1);
    Rng rng(1);
    inf.initialize(rng);
    AdamState adam = AdamState::for_params(inf.params, 3e-3);
    for (std::size_t epoch = 0; epoch < 6; ++epoch) {
      for (std::size_t b = 0; b < train.size(); b += 10) {
        auto grads = GradientSet::zeros_like(inf.params);
        for (std::size_t i = b; i < std::min(b + 10, train.size()); ++i) {
          elbo_gradients(train[i], gen, inf, derive_seed(epoch, i), {}, 0.0, nullptr, &grads);
        }
        grads.scale(0.1);
        adam_step(adam, inf.params, grads);
      }
    }
    std::vector<int> y;
    std::vector<double> first, last;
    PredictOptions o;
    o.band_samples = 1;
    for (const auto& c : test) {
      const auto t = predict_sequence(c, gen, inf, o);
      y.push_back(c.label);
      first.push_back(t.calls.front().rate_mean);
      last.push_back(t.calls.back().rate_mean);
    }
    const double a1 = auc(y, first), aL = auc(y, last);
    MESSAGE("AUC first call " << a1 << ", last call " << aL);
    CHECK(aL - a1 >= 0.02);
  }
}

TEST_SUITE("classify") {
  TEST_CASE("threshold is inclusive") {
    BeliefTrajectory t;
    t.calls.resize(3);
    t.calls[0].rate_mean = 0.2;
    t.calls[1].rate_mean = 0.7;
    t.calls[2].rate_mean = 0.5;
    CHECK(classify(t, 0.5) == std::vector<int>{0, 1, 1});
    CHECK_THROWS_AS(classify(t, 0.0), InvalidInput);
    CHECK_THROWS_AS(classify(t, 1.0), InvalidInput);
  }

  TEST_CASE("tuned threshold separates perfectly separated scores") {
    const std::vector<double> s = {0.1, 0.9, 0.1, 0.9, 0.1};
    const std::vector<int> y = {0, 1, 0, 1, 0};
    const double t = tune_threshold(s, y);
    CHECK(t > 0.1);
    CHECK(t <= 0.9);
    std::vector<int> pred;
    for (double x : s) pred.push_back(x >= t ? 1 : 0);
    CHECK(classification_metrics(y, pred).f1 == 1.0);
  }

  TEST_CASE("ties go to the lowest threshold") {
    // Thresholds 0.3 and 0.6 both give F1 = 2/3.
    const std::vector<double> s = {0.3, 0.6, 0.8};
    const std::vector<int> y = {0, 0, 1};
    CHECK(tune_threshold(s, std::vector<int>{1, 0, 1}) == 0.3);
    CHECK(tune_threshold(s, y) == 0.8);
    CHECK_THROWS_AS(tune_threshold({}, {}), InvalidInput);
  }
}

TEST_SUITE("trajectory files") {
  TEST_CASE("round trip is exact") {
    const auto m = fixtures::tiny_model(7, 3, 4, 2);
    std::vector<BeliefTrajectory> ts;
    for (std::uint64_t s = 0; s < 4; ++s) ts.push_back(predict_sequence(fixtures::encoded({2, 1}, 4, 2, 1, s), m.gen, m.inf));
    const std::string text = serialize_trajectories(ts);
    CHECK(parse_trajectories(text) == ts);
    CHECK(serialize_trajectories(parse_trajectories(text)) == text);
  }

  TEST_CASE("malformed lines report their number") {
    const auto m = fixtures::tiny_model(8, 2, 4, 2);
    const std::string good = serialize_trajectory(predict_sequence(fixtures::encoded({1}, 4, 2, 1, 1), m.gen, m.inf));
    try {
      parse_trajectories(good + "\n\n" + R"({"company_id":"x","calls":[]})" + "\n");
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.line() == 3);
    }
  }
}
