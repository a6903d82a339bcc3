#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "shear/cache.hpp"
#include "shear/trainer.hpp"

namespace shear {

struct EvalRow {
  std::string id;
  double rouge_l_vs_reference = 0.0;
  double cr = 0.0;
  std::string compressed_text;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_rouge_l = 0.0;
  double mean_cr = 0.0;
  // 100 * mean_rouge_l / baseline mean, when a baseline was named.
  std::optional<double> normalized_pct;
};

struct EvalOptions {
  // Score the uncompressed prompts instead of applying the policy; this is
  // how a baseline report is produced.
  bool identity_policy = false;
  std::optional<double> baseline_mean_rouge;
};

// Greedy-compresses each record, generates with length capped at the
// reference's token count under tokenizers.faithfulness, and scores
// ROUGE-L F1 against the reference plus the statement-excluded cr.
// Records without a reference are rejected with ContractError.
EvalReport evaluate_policy(const std::vector<PromptRecord>& dataset,
                           const TrainState& state, Backend& backend,
                           ResponseCache& cache, const TrainerTokenizers& tokenizers,
                           const EvalOptions& options = {});

// "20.5 (88.6)" when a normalized percentage is present, else "20.5".
std::string format_score_cell(double score, std::optional<double> normalized_pct);

void write_eval_report_json(const EvalReport& report, const std::filesystem::path& path);
void write_eval_report_text(const EvalReport& report, std::ostream& os);

// Mean ROUGE-L recorded in a previously written report JSON.
double baseline_mean_from_report(const std::filesystem::path& path);

struct RemovalRow {
  std::string token;
  int64_t freq_rank = 0;  // dense rank by appear_count descending
  uint64_t appear = 0;
  uint64_t removed = 0;
  double ratio = 0.0;  // removed / appear
};

struct RemovalStats {
  std::vector<RemovalRow> rows;  // top_n most frequent, by ratio descending
};

// Greedy compression over the dataset; tallies are over maskable positions
// only, so statement tokens never enter the table.
RemovalStats removal_statistics(const std::vector<PromptRecord>& dataset,
                                const TrainState& state,
                                const TokenizerSpec& policy_tokenizer, size_t top_n);

// Ratio column follows the percentage convention with two decimals
// (9997 removed of 10000 prints as 99.97).
std::string format_removal_ratio(uint64_t removed, uint64_t appear);
std::string removal_stats_csv(const RemovalStats& stats);

struct JudgePair {
  std::string task;
  std::string response_a;  // compressed-prompt response; wins are tallied for it
  std::string response_b;
};

struct JudgeOutcome {
  uint64_t comparisons = 0;  // parsed replies only
  uint64_t wins_compressed = 0;
  uint64_t skipped = 0;  // unparseable replies
  double win_rate = 0.0;
  double ci95_halfwidth = 0.0;  // 1.96 * sqrt(p(1-p)/n)
};

// Template slots are positional: {task}, {first}, {second}. Our own default
// wording; the forced choice is a literal 1 or 2.
extern const char* const kDefaultJudgeTemplate;

// One judge query per pair with the A/B order randomized from `seed`;
// swap_all_positions additionally inverts every assignment (used to verify
// position-bias symmetry). Replies without a parseable 1/2 are skipped.
JudgeOutcome judge_win_rate(const std::vector<JudgePair>& pairs, Backend& judge_backend,
                            ResponseCache* cache, const std::string& template_text,
                            uint64_t seed, bool swap_all_positions = false);

}  // namespace shear
