#include "cli.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shear/backend.hpp"
#include "shear/cache.hpp"
#include "shear/checkpoint.hpp"
#include "shear/config.hpp"
#include "shear/errors.hpp"
#include "shear/eval.hpp"
#include "shear/metrics.hpp"
#include "shear/policy.hpp"
#include "shear/text.hpp"
#include "shear/trainer.hpp"

namespace shear::cli {
namespace {

namespace fs = std::filesystem;

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : parse_run_config(path);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int cmd_train(const std::string& config_path, const std::string& resume_dir) {
  RunConfig config = parse_run_config(config_path);
  if (config.dataset.empty()) throw ConfigError("train: config has no \"dataset\" path");
  TrainerTokenizers tokenizers = config.make_tokenizers();
  std::vector<PromptRecord> dataset = parse_dataset(config.dataset);
  std::unique_ptr<Backend> backend = make_backend(config.backend);
  ResponseCache cache(config.cache_dir);

  fs::create_directories(config.output_dir);
  write_run_config(config, config.output_dir / "config.json");

  TrainOptions options;
  options.metrics_path = config.output_dir / "metrics.jsonl";
  options.checkpoint_dir = config.output_dir / "checkpoints";
  options.on_step = [](const StepMetrics& m) {
    std::fprintf(stderr,
                 "step %lld  reward %+.4f  cr %.4f  rf %.4f  penalty %.2f  entropy %.3f  "
                 "calls %llu  hits %llu\n",
                 static_cast<long long>(m.step), m.mean_reward, m.mean_cr, m.mean_rf,
                 m.penalty_rate, m.entropy, static_cast<unsigned long long>(m.backend_calls),
                 static_cast<unsigned long long>(m.cache_hits));
  };

  TrainState state;
  if (!resume_dir.empty()) {
    state = load_checkpoint(resume_dir, tokenizers.policy.fingerprint);
  } else {
    state = make_initial_state(config.feature, config.hidden_width, config.training,
                               tokenizers.policy, config.init_keep_bias);
    // A fresh run must not append to a previous run's log.
    fs::remove(options.metrics_path);
  }

  train(state, dataset, *backend, cache, config.training, tokenizers, options);
  std::printf("trained to step %lld; final checkpoint in %s\n",
              static_cast<long long>(state.step),
              (options.checkpoint_dir / "final").string().c_str());
  return 0;
}

int cmd_compress(const std::string& checkpoint_dir, const std::string& prompt_text,
                 bool prompt_given, const std::string& dataset_path, bool show_removed,
                 const std::string& config_path) {
  RunConfig config = config_or_default(config_path);
  TokenizerSpec policy_tok = make_tokenizer(config.policy_tokenizer);
  TokenizerSpec counting_tok = make_tokenizer(config.counting_tokenizer);
  TrainState state = load_checkpoint(checkpoint_dir, policy_tok.fingerprint);

  std::vector<PromptRecord> records;
  if (prompt_given) {
    PromptRecord record;
    record.id = "prompt";
    record.instruction = prompt_text;
    records.push_back(std::move(record));
  } else {
    records = parse_dataset(dataset_path);
  }

  for (const PromptRecord& record : records) {
    RenderedPrompt rendered = segment_and_mask(record, policy_tok);
    Featurization features = featurize(rendered, state.feature_config, state.params);
    TokenProbs probs = forward(state.params, features, rendered.maskable);
    CompressedPrompt compressed = compress(rendered, greedy_actions(probs));
    CompressionReport report = compression_ratio(rendered, compressed.effective, counting_tok);
    std::printf("id: %s\n", record.id.c_str());
    std::printf("cr: %s\n", report.display().c_str());
    const std::string& shown =
        show_removed ? render_with_removals(rendered, compressed.effective) : compressed.text;
    std::printf("%s\n\n", shown.c_str());
  }
  return 0;
}

// A baseline run is named by its output directory or directly by its
// report file.
double baseline_mean_from_run(const std::string& run) {
  fs::path path(run);
  if (fs::is_directory(path)) path /= "eval.json";
  return baseline_mean_from_report(path);
}

int cmd_eval(const std::string& checkpoint_dir, const std::string& dataset_path,
             const std::string& config_path, const std::string& baseline_run, bool identity,
             const std::string& out_path) {
  RunConfig config = parse_run_config(config_path);
  TrainerTokenizers tokenizers = config.make_tokenizers();
  std::vector<PromptRecord> dataset = parse_dataset(dataset_path);
  std::unique_ptr<Backend> backend = make_backend(config.backend);
  ResponseCache cache(config.cache_dir);

  // Identity runs score the uncompressed prompts, so no trained weights are
  // needed; an initial state supplies the tokenizer fingerprint and shapes.
  TrainState state = checkpoint_dir.empty()
                         ? make_initial_state(config.feature, config.hidden_width,
                                              config.training, tokenizers.policy,
                                              config.init_keep_bias)
                         : load_checkpoint(checkpoint_dir, tokenizers.policy.fingerprint);

  EvalOptions options;
  options.identity_policy = identity;
  if (!baseline_run.empty()) options.baseline_mean_rouge = baseline_mean_from_run(baseline_run);

  EvalReport report = evaluate_policy(dataset, state, *backend, cache, tokenizers, options);

  fs::path out = out_path.empty() ? config.output_dir / "eval.json" : fs::path(out_path);
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  write_eval_report_json(report, out);
  write_eval_report_text(report, std::cout);
  std::printf("report: %s\n", out.string().c_str());
  return 0;
}

int cmd_analyze(const std::string& checkpoint_dir, const std::string& dataset_path,
                size_t top_n, const std::string& config_path, const std::string& out_path) {
  RunConfig config = config_or_default(config_path);
  TokenizerSpec policy_tok = make_tokenizer(config.policy_tokenizer);
  TrainState state = load_checkpoint(checkpoint_dir, policy_tok.fingerprint);
  std::vector<PromptRecord> dataset = parse_dataset(dataset_path);

  RemovalStats stats = removal_statistics(dataset, state, policy_tok, top_n);
  std::string csv = removal_stats_csv(stats);
  if (out_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot open " + out_path);
    out << csv;
  }
  return 0;
}

int cmd_judge(const std::string& pairs_path, const std::string& config_path,
              const std::string& template_path, std::optional<uint64_t> seed,
              bool swap_positions) {
  RunConfig config = parse_run_config(config_path);
  std::vector<JudgePair> pairs = parse_judge_pairs(pairs_path);
  std::unique_ptr<Backend> backend = make_backend(config.backend);
  ResponseCache cache(config.cache_dir);

  std::string template_text =
      template_path.empty() ? std::string(kDefaultJudgeTemplate) : read_text_file(template_path);
  JudgeOutcome outcome = judge_win_rate(pairs, *backend, &cache, template_text,
                                        seed.value_or(config.training.seed), swap_positions);

  std::printf("pairs: %zu\n", pairs.size());
  std::printf("comparisons: %llu\n", static_cast<unsigned long long>(outcome.comparisons));
  std::printf("wins (compressed): %llu\n",
              static_cast<unsigned long long>(outcome.wins_compressed));
  std::printf("skipped: %llu\n", static_cast<unsigned long long>(outcome.skipped));
  std::printf("win_rate: %.4f +/- %.4f\n", outcome.win_rate, outcome.ci95_halfwidth);
  return 0;
}

int cmd_cache_stats(const std::string& dir) {
  ResponseCache cache(dir);
  ResponseCache::Stats stats = cache.stats();
  std::printf("entries: %llu\n", static_cast<unsigned long long>(stats.entries));
  std::printf("bytes: %llu\n", static_cast<unsigned long long>(stats.bytes));
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"shear: token-level prompt compression against black-box LMs"};
  app.name("shear");
  app.require_subcommand(1);

  std::string train_config, train_resume;
  CLI::App* train_cmd = app.add_subcommand("train", "train a compression policy");
  train_cmd->add_option("--config", train_config, "run config JSON")->required();
  train_cmd->add_option("--resume", train_resume, "checkpoint directory to resume from");

  std::string co_checkpoint, co_prompt, co_dataset, co_config;
  bool co_show_removed = false;
  CLI::App* compress_cmd =
      app.add_subcommand("compress", "apply a trained policy to prompts");
  compress_cmd->add_option("--checkpoint", co_checkpoint, "checkpoint directory")->required();
  CLI::Option* co_prompt_opt =
      compress_cmd->add_option("--prompt", co_prompt, "instruction text to compress");
  compress_cmd->add_option("--dataset", co_dataset, "dataset JSONL to compress")
      ->excludes(co_prompt_opt);
  compress_cmd->add_flag("--show-removed", co_show_removed,
                         "annotate removed tokens in parentheses");
  compress_cmd->add_option("--config", co_config, "run config JSON (tokenizers)");

  std::string ev_checkpoint, ev_dataset, ev_config, ev_baseline, ev_out;
  bool ev_identity = false;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a policy against references");
  eval_cmd->add_option("--checkpoint", ev_checkpoint, "checkpoint directory");
  eval_cmd->add_option("--dataset", ev_dataset, "dataset JSONL with references")->required();
  eval_cmd->add_option("--config", ev_config, "run config JSON")->required();
  eval_cmd->add_option("--baseline-run", ev_baseline,
                       "baseline run directory or report JSON for normalized scores");
  eval_cmd->add_flag("--identity", ev_identity, "score uncompressed prompts (baseline run)");
  eval_cmd->add_option("--out", ev_out, "report JSON path (default <output_dir>/eval.json)");

  std::string an_checkpoint, an_dataset, an_config, an_out;
  size_t an_top_n = 1000;
  CLI::App* analyze_cmd =
      app.add_subcommand("analyze", "per-token removal statistics as CSV");
  analyze_cmd->add_option("--checkpoint", an_checkpoint, "checkpoint directory")->required();
  analyze_cmd->add_option("--dataset", an_dataset, "dataset JSONL")->required();
  analyze_cmd->add_option("--top-n", an_top_n, "most frequent tokens to keep");
  analyze_cmd->add_option("--config", an_config, "run config JSON (tokenizers)");
  analyze_cmd->add_option("--out", an_out, "CSV path (default stdout)");

  std::string ju_pairs, ju_config, ju_template;
  std::optional<uint64_t> ju_seed;
  bool ju_swap = false;
  CLI::App* judge_cmd =
      app.add_subcommand("judge", "pairwise LM preference over response pairs");
  judge_cmd->add_option("--pairs", ju_pairs, "pairs JSONL")->required();
  judge_cmd->add_option("--config", ju_config, "run config JSON (judge backend)")->required();
  judge_cmd->add_option("--template-file", ju_template, "judge prompt template override");
  judge_cmd->add_option("--seed", ju_seed, "A/B placement seed (default: training seed)");
  judge_cmd->add_flag("--swap-positions", ju_swap, "invert every A/B placement");

  CLI::App* cache_cmd = app.add_subcommand("cache", "response cache utilities");
  cache_cmd->require_subcommand(1);
  std::string cs_dir;
  CLI::App* cache_stats_cmd = cache_cmd->add_subcommand("stats", "entry count and total bytes");
  cache_stats_cmd->add_option("--dir", cs_dir, "cache directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "shear: " << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  const bool co_prompt_given = compress_cmd->count("--prompt") > 0;
  if (compress_cmd->parsed() && co_prompt_given == (compress_cmd->count("--dataset") > 0)) {
    std::cerr << "shear: compress needs exactly one of --prompt or --dataset\n\n"
              << app.help() << std::flush;
    return 2;
  }
  if (eval_cmd->parsed() && ev_checkpoint.empty() && !ev_identity) {
    std::cerr << "shear: eval needs --checkpoint (or --identity for a baseline run)\n\n"
              << app.help() << std::flush;
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_config, train_resume);
    if (compress_cmd->parsed()) {
      return cmd_compress(co_checkpoint, co_prompt, co_prompt_given, co_dataset,
                          co_show_removed, co_config);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(ev_checkpoint, ev_dataset, ev_config, ev_baseline, ev_identity, ev_out);
    }
    if (analyze_cmd->parsed()) {
      return cmd_analyze(an_checkpoint, an_dataset, an_top_n, an_config, an_out);
    }
    if (judge_cmd->parsed()) {
      return cmd_judge(ju_pairs, ju_config, ju_template, ju_seed, ju_swap);
    }
    if (cache_stats_cmd->parsed()) return cmd_cache_stats(cs_dir);
  } catch (const Error& e) {
    std::cerr << "shear: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "shear: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace shear::cli
