#include <benchmark/benchmark.h>

#include <string>

#include "shear/policy.hpp"
#include "shear/rng.hpp"
#include "shear/text.hpp"

using namespace shear;

namespace {

struct PolicyFixture {
  FeatureConfig config;
  PolicyParams params;
  RenderedPrompt rendered;
  Featurization features;
  TokenProbs probs;
  ActionVector action;

  explicit PolicyFixture(size_t input_words) {
    config.embedding_dim = 64;
    config.context_window = 2;
    config.vocab_size = 32768;
    Rng rng(7);
    params = init_params(config, 256, rng);

    PromptRecord record;
    record.id = "bench";
    record.instruction = "Copy the key terms from the input list.";
    std::string input;
    for (size_t i = 0; i < input_words; ++i) {
      if (!input.empty()) input.push_back(' ');
      input += (i % 3 == 0) ? "the" : "zebra";
    }
    record.input = input;
    rendered = segment_and_mask(record, TokenizerSpec::unicode_rules());
    features = featurize(rendered, config, params);
    probs = forward(params, features, rendered.maskable);
    Rng sample_rng(11);
    action = sample_actions(probs, sample_rng);
  }
};

}  // namespace

static void BM_Featurize(benchmark::State& state) {
  PolicyFixture fx(static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(featurize(fx.rendered, fx.config, fx.params));
  }
}
BENCHMARK(BM_Featurize)->Arg(32)->Arg(128);

static void BM_Forward(benchmark::State& state) {
  PolicyFixture fx(static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(fx.params, fx.features, fx.rendered.maskable));
  }
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(128);

static void BM_PolicyGradient(benchmark::State& state) {
  PolicyFixture fx(static_cast<size_t>(state.range(0)));
  GradientBuffer grad;
  grad.init_like(fx.params);
  for (auto _ : state) {
    grad.clear();
    accumulate_policy_gradient(fx.params, fx.config, fx.features, fx.rendered.maskable,
                               fx.action, 0.5, 0.001, grad);
    benchmark::DoNotOptimize(grad);
  }
}
BENCHMARK(BM_PolicyGradient)->Arg(32)->Arg(128);
