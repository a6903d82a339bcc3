#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "shear/backend.hpp"
#include "shear/eval.hpp"
#include "shear/policy.hpp"
#include "shear/text.hpp"
#include "shear/trainer.hpp"

namespace shear {

struct TokenizerChoice {
  std::string kind = "unicode-rules";  // "unicode-rules" | "bpe"
  std::filesystem::path vocab_file;    // required for bpe, optional otherwise

  void validate() const;
};

TokenizerSpec make_tokenizer(const TokenizerChoice& choice);

// Everything a run needs, with every field defaulted so a minimal config
// file is valid. Unknown keys anywhere in the file are rejected.
struct RunConfig {
  TrainingConfig training;
  FeatureConfig feature;
  int hidden_width = 256;
  double init_keep_bias = 2.0;
  BackendDescriptor backend;
  TokenizerChoice policy_tokenizer;
  TokenizerChoice counting_tokenizer;
  TokenizerChoice faithfulness_tokenizer;
  std::filesystem::path dataset;
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path output_dir = "out";

  TrainerTokenizers make_tokenizers() const;
};

// Starts from defaults (or the named preset), overrides with the file's
// keys, validates, and checks that referenced tokenizer/embedding files
// resolve. Presets: "desk" (the defaults) and "paper" (learning rate 3e-5,
// hidden width 4096).
RunConfig parse_run_config(const std::filesystem::path& path);
RunConfig run_config_preset(const std::string& name);

// Writes the fully-materialized config (all defaults expanded) so a run's
// output directory records exactly what it ran with.
void write_run_config(const RunConfig& config, const std::filesystem::path& path);

// JSONL, one record per line: instruction (required, non-empty), input
// (optional), output (optional), id (optional; line number when absent).
// Unknown record fields are ignored, since dataset files come from outside.
// Malformed lines and missing instructions fail with their line number.
std::vector<PromptRecord> parse_dataset(const std::filesystem::path& path);

// JSONL judge pairs: task, response_a, response_b (all required).
std::vector<JudgePair> parse_judge_pairs(const std::filesystem::path& path);

}  // namespace shear
