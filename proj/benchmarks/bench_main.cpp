#include <benchmark/benchmark.h>

#include "seqbelief/embed.hpp"
#include "seqbelief/metrics.hpp"
#include "seqbelief/nn.hpp"
#include "seqbelief/objective.hpp"

using namespace seqbelief;

namespace {

void BM_MlpForwardBackward(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  ParameterSet params;
  MlpSpec spec;
  spec.input_dim = width;
  spec.hidden_dims = {width, width};
  spec.output_dim = 1;
  const Mlp mlp(params, "bench", spec);
  Rng rng(1);
  mlp.initialize(params, rng);
  const Tensor x = standard_normal(width, rng);
  auto grads = GradientSet::zeros_like(params);
  for (auto _ : state) {
    ad::Tape tape;
    const Binding bind{params, &grads};
    const ad::Var y = mlp.forward(tape, bind, tape.constant(x), {});
    const ad::Var loss = tape.sum(y);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.item(loss));
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(16)->Arg(64)->Arg(256);

/// One company, both gradient sets: L calls of K exchanges each.
void BM_ElboGradients(benchmark::State& state) {
  const auto calls = static_cast<std::size_t>(state.range(0));
  ModelDims d;
  d.d_s = 8;
  d.d_emb = 16;
  d.d_e = 8;
  d.hidden_width = 32;
  d.hidden_layers = 2;
  d.token_dim = 32;
  d.dropout = 0.0;
  GenParams gen(d, 1.0);
  InfParams inf(d, 0.1);
  Rng rng(2);
  gen.initialize(rng);
  inf.initialize(rng);
  EncodedCompany c;
  c.company_id = "bench";
  c.label = 1;
  c.features = standard_normal(d.d_e, rng);
  for (std::size_t l = 0; l < calls; ++l) {
    CallEmbeddings call;
    for (std::size_t k = 0; k < 5; ++k) {
      call.questions.push_back(standard_normal(d.d_emb, rng));
      call.answers.push_back(standard_normal(d.d_emb, rng));
    }
    c.calls.push_back(std::move(call));
    c.gaps_days.push_back(90.0 * static_cast<double>(calls - l));
    c.expert_types.push_back(ExpertType::Customer);
  }
  auto gg = GradientSet::zeros_like(gen.params);
  auto ig = GradientSet::zeros_like(inf.params);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(elbo_gradients(c, gen, inf, seed++, {}, 1.0, &gg, &ig).weighted_total);
  }
}
BENCHMARK(BM_ElboGradients)->Arg(1)->Arg(3)->Arg(5);

void BM_MockEmbed(benchmark::State& state) {
  const std::string text =
      "Revenue roughly doubled last year, mostly from mid-market customers who renewed at higher tiers.";
  const auto d = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mock_embed(text, d));
}
BENCHMARK(BM_MockEmbed)->Arg(16)->Arg(768);

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<int> y(n);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    s[i] = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(y, s));
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
}
BENCHMARK(BM_Auc)->Range(1 << 8, 1 << 16)->Complexity();

}  // namespace
BENCHMARK_MAIN();
