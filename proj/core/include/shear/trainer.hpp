#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "shear/backend.hpp"
#include "shear/cache.hpp"
#include "shear/metrics.hpp"
#include "shear/policy.hpp"
#include "shear/rng.hpp"
#include "shear/text.hpp"

namespace shear {

struct TrainingConfig {
  double tau = 0.9;      // faithfulness threshold
  double lambda = 0.01;  // penalty magnitude
  double alpha = 0.001;  // entropy coefficient
  int k = 4;             // sampled actions per prompt
  int max_new_tokens = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int steps = 1000;
  uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int checkpoint_every = 0;  // 0 writes only the final checkpoint
  // Reward-side Cr normally excludes statement tokens, same as evaluation;
  // set to count every token instead.
  bool reward_cr_includes_statements = false;

  void validate() const;
};

struct RewardBreakdown {
  double r_f = 0.0;
  double cr = 0.0;
  double reward = 0.0;
  bool penalized = false;  // r_f < tau
};

struct AdamState {
  GradientBuffer m;
  GradientBuffer v;
  void init_like(const PolicyParams& params);
};

// One metrics-log row. Means are taken over the step's sampled actions
// across prompts that completed; entropy is the mean per-prompt policy
// entropy (summed over maskable tokens).
struct StepMetrics {
  int64_t step = 0;
  double mean_reward = 0.0;
  double mean_cr = 0.0;
  double mean_rf = 0.0;
  double penalty_rate = 0.0;
  double entropy = 0.0;
  int64_t wall_ms = 0;
  uint64_t backend_calls = 0;
  uint64_t cache_hits = 0;
  uint64_t skipped_prompts = 0;  // in-memory only, not part of the log row

  std::string to_json_line() const;
};

struct TrainState {
  int64_t step = 0;
  FeatureConfig feature_config;
  std::string tokenizer_fingerprint;
  PolicyParams params;
  AdamState opt;
  Rng rng{0};
  StepMetrics last_metrics;
};

// Tokenizers for the three distinct jobs in the loop. They may all be the
// same spec; the split exists because counting and faithfulness scoring are
// defined on decoded text, independent of the policy's token ids.
struct TrainerTokenizers {
  TokenizerSpec policy;
  TokenizerSpec counting;
  TokenizerSpec faithfulness;

  static TrainerTokenizers all_unicode() {
    TokenizerSpec u = TokenizerSpec::unicode_rules();
    return TrainerTokenizers{u, u, u};
  }
};

// ROUGE-L F1 between the two outputs under eval_spec.
double compute_faithfulness(const std::string& original_output,
                            const std::string& compressed_output,
                            const TokenizerSpec& eval_spec);

// reward = cr when r_f >= tau (boundary keeps the compression branch),
// else -lambda. cr is always filled in for diagnostics.
RewardBreakdown compute_reward(double r_f, const RenderedPrompt& original,
                               const std::string& compressed_text,
                               const TrainingConfig& config,
                               const TokenizerSpec& counting_spec);

TrainState make_initial_state(const FeatureConfig& feature_config, int hidden_width,
                              const TrainingConfig& config,
                              const TokenizerSpec& policy_tokenizer,
                              double init_keep_bias = 2.0);

// One SCST step over a batch: per prompt, k sampled actions are scored
// against the shared greedy baseline, generations are batch-deduplicated
// through the cache (misses dispatched concurrently up to the backend
// limit), and one Adam update is applied. Prompts whose generations fail
// are skipped; a fully failed batch raises StepError.
StepMetrics scst_update(TrainState& state, const std::vector<const RenderedPrompt*>& batch,
                        Backend& backend, ResponseCache& cache,
                        const TrainingConfig& config, const TrainerTokenizers& tokenizers);

struct TrainOptions {
  std::filesystem::path metrics_path;    // JSONL, appended; empty disables
  std::filesystem::path checkpoint_dir;  // step/final checkpoints; empty disables
  std::function<void(const StepMetrics&)> on_step;  // observer hook
};

// Runs scst_update from state.step to config.steps over epoch-shuffled
// batches (shuffle order is a pure function of seed and epoch, so resuming
// from a checkpoint continues the exact trajectory).
std::vector<StepMetrics> train(TrainState& state, const std::vector<PromptRecord>& dataset,
                               Backend& backend, ResponseCache& cache,
                               const TrainingConfig& config,
                               const TrainerTokenizers& tokenizers,
                               const TrainOptions& options = {});

}  // namespace shear
