#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "shear/text.hpp"

using namespace shear;

namespace {

std::string synthetic_words(size_t n) {
  static const char* pool[] = {"zebra", "quartz", "breeze",  "canyon", "meadow",
                               "the",   "of",     "lantern", "orchid", "and"};
  constexpr size_t pool_size = sizeof pool / sizeof *pool;
  std::string out;
  for (size_t i = 0; i < n; ++i) {
    if (!out.empty()) out.push_back(' ');
    out += pool[i % pool_size];
    if (i % 13 == 12) out.push_back(',');
  }
  return out;
}

PromptRecord synthetic_record(size_t input_words) {
  PromptRecord r;
  r.id = "bench";
  r.instruction = "Copy the key terms from the input list.";
  r.input = synthetic_words(input_words);
  return r;
}

}  // namespace

static void BM_Tokenize(benchmark::State& state) {
  const TokenizerSpec spec = TokenizerSpec::unicode_rules();
  const std::string text = synthetic_words(static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(tokenize(spec, text));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Tokenize)->Arg(64)->Arg(512)->Arg(4096);

static void BM_SegmentAndMask(benchmark::State& state) {
  const TokenizerSpec spec = TokenizerSpec::unicode_rules();
  const PromptRecord record = synthetic_record(static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(segment_and_mask(record, spec));
  }
}
BENCHMARK(BM_SegmentAndMask)->Arg(64)->Arg(512);

// compress + detokenize with every other maskable token dropped, the shape a
// trained policy produces
static void BM_CompressHalf(benchmark::State& state) {
  const TokenizerSpec spec = TokenizerSpec::unicode_rules();
  const PromptRecord record = synthetic_record(static_cast<size_t>(state.range(0)));
  const RenderedPrompt rendered = segment_and_mask(record, spec);
  ActionVector action = ActionVector::ones(rendered.size());
  bool drop = false;
  for (size_t i = 0; i < rendered.size(); ++i) {
    if (!rendered.maskable[i]) continue;
    if (drop) action.bits[i] = 0;
    drop = !drop;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(compress(rendered, action));
  }
}
BENCHMARK(BM_CompressHalf)->Arg(64)->Arg(512);
