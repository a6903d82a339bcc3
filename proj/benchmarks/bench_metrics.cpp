#include <benchmark/benchmark.h>

#include <cstdint>
#include <string>
#include <vector>

#include "shear/metrics.hpp"
#include "shear/rng.hpp"
#include "shear/text.hpp"

using namespace shear;

namespace {

std::vector<int64_t> random_ids(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<int64_t> ids(n);
  for (int64_t& id : ids) id = static_cast<int64_t>(rng.bounded(64));
  return ids;
}

}  // namespace

static void BM_LcsLength(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  const std::vector<int64_t> a = random_ids(n, 1);
  const std::vector<int64_t> b = random_ids(n, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lcs_length(a, b));
  }
}
BENCHMARK(BM_LcsLength)->Arg(32)->Arg(256)->Arg(1024);

static void BM_RougeL(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  const std::vector<int64_t> gen = random_ids(n, 3);
  const std::vector<int64_t> ref = random_ids(n, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rouge_l(gen, ref));
  }
}
BENCHMARK(BM_RougeL)->Arg(32)->Arg(256);

static void BM_CompressionRatioText(benchmark::State& state) {
  const TokenizerSpec counting = TokenizerSpec::unicode_rules();
  PromptRecord record;
  record.id = "bench";
  record.instruction = "Copy the key terms from the input list.";
  std::string input;
  for (int i = 0; i < 128; ++i) {
    if (!input.empty()) input.push_back(' ');
    input += (i % 3 == 0) ? "the" : "zebra";
  }
  record.input = input;
  const RenderedPrompt rendered = segment_and_mask(record, counting);
  ActionVector action = ActionVector::ones(rendered.size());
  for (size_t i = 0; i < rendered.size(); ++i) {
    if (rendered.maskable[i] && rendered.tokens[i].text == "the") action.bits[i] = 0;
  }
  const std::string compressed = compress(rendered, action).text;
  for (auto _ : state) {
    benchmark::DoNotOptimize(compression_ratio(rendered, compressed, counting));
  }
}
BENCHMARK(BM_CompressionRatioText);
