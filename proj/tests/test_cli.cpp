#include <doctest.h>

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "shear/checkpoint.hpp"
#include "shear/config.hpp"
#include "shear/eval.hpp"
#include "shear/text.hpp"
#include "support/helpers.hpp"

using namespace shear;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI in-process with stdout/stderr redirected at the fd level, so
// both printf and iostream output land in the capture files.
CliResult run_captured(const std::vector<std::string>& args, const fs::path& scratch) {
  const fs::path out_path = scratch / "stdout.txt";
  const fs::path err_path = scratch / "stderr.txt";
  std::fflush(stdout);
  std::fflush(stderr);
  const int saved_out = dup(1);
  const int saved_err = dup(2);
  REQUIRE(saved_out >= 0);
  REQUIRE(saved_err >= 0);
  const int out_fd = open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  const int err_fd = open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  dup2(out_fd, 1);
  dup2(err_fd, 2);
  close(out_fd);
  close(err_fd);

  CliResult result;
  try {
    result.exit_code = cli::run_cli(args);
  } catch (...) {
    std::fflush(stdout);
    std::fflush(stderr);
    dup2(saved_out, 1);
    dup2(saved_err, 2);
    close(saved_out);
    close(saved_err);
    throw;
  }
  std::fflush(stdout);
  std::fflush(stderr);
  dup2(saved_out, 1);
  dup2(saved_err, 2);
  close(saved_out);
  close(saved_err);
  result.out = test::read_file(out_path);
  result.err = test::read_file(err_path);
  return result;
}

size_t count_lines(const std::string& text) {
  size_t lines = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++lines;
  }
  return lines;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2, help exits 0, runtime failures exit 1") {
  test::TempDir tmp;

  CliResult r = run_captured({}, tmp.path());
  CHECK(r.exit_code == 2);

  r = run_captured({"bogus-subcommand"}, tmp.path());
  CHECK(r.exit_code == 2);

  r = run_captured({"--help"}, tmp.path());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("shear") != std::string::npos);

  r = run_captured({"train"}, tmp.path());  // missing required --config
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("--config") != std::string::npos);

  r = run_captured({"compress", "--checkpoint", "x", "--prompt", "p",
                    "--dataset", "d"}, tmp.path());
  CHECK(r.exit_code == 2);

  r = run_captured({"compress", "--checkpoint", "x"}, tmp.path());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("--prompt or --dataset") != std::string::npos);

  r = run_captured({"eval", "--dataset", "d", "--config", "c"}, tmp.path());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("--identity") != std::string::npos);

  // a well-formed invocation that fails at runtime
  r = run_captured({"train", "--config", (tmp / "absent.json").string()}, tmp.path());
  CHECK(r.exit_code == 1);
  CHECK(r.err.rfind("shear: ", 0) == 0);
}

TEST_CASE("train, compress, eval, analyze, judge, and cache stats work end to end") {
  test::TempDir tmp;
  const test::DistractorCorpus corpus = test::make_micro_corpus(6, 91);
  const fs::path dataset_path = tmp / "data.jsonl";
  test::write_dataset(dataset_path, corpus.records);

  const fs::path out_dir = tmp / "out";
  auto config_json = [&](int steps) {
    return json{
        {"training",
         {{"steps", steps}, {"batch_size", 3}, {"k", 2}, {"seed", 5},
          {"max_new_tokens", 8}}},
        {"feature", {{"embedding_dim", 6}, {"context_window", 1}, {"vocab_size", 512}}},
        {"hidden_width", 8},
        {"backend",
         {{"kind", "oracle:distractor-echo"},
          {"model", "cli-e2e"},
          {"filler_tokens", corpus.filler}}},
        {"dataset", dataset_path.string()},
        {"cache_dir", (tmp / "cache").string()},
        {"output_dir", out_dir.string()},
    };
  };
  const fs::path config_path = tmp / "config.json";
  test::write_file(config_path, config_json(3).dump(2));

  // train writes the config echo, a metrics log, and checkpoints
  CliResult r = run_captured({"train", "--config", config_path.string()}, tmp.path());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("trained to step 3") != std::string::npos);
  CHECK(fs::exists(out_dir / "config.json"));
  CHECK_NOTHROW(parse_run_config(out_dir / "config.json"));
  const fs::path metrics_path = out_dir / "metrics.jsonl";
  REQUIRE(fs::exists(metrics_path));
  CHECK(count_lines(test::read_file(metrics_path)) == 3);
  const fs::path final_ckpt = out_dir / "checkpoints" / "final";
  REQUIRE(fs::exists(final_ckpt / "manifest.json"));
  CHECK(load_checkpoint(final_ckpt).step == 3);

  // a fresh run truncates the metrics log instead of appending
  r = run_captured({"train", "--config", config_path.string()}, tmp.path());
  REQUIRE(r.exit_code == 0);
  CHECK(count_lines(test::read_file(metrics_path)) == 3);

  // resuming appends and continues to the new step target
  const fs::path config5_path = tmp / "config5.json";
  test::write_file(config5_path, config_json(5).dump(2));
  r = run_captured({"train", "--config", config5_path.string(), "--resume",
                    final_ckpt.string()}, tmp.path());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("trained to step 5") != std::string::npos);
  CHECK(count_lines(test::read_file(metrics_path)) == 5);
  CHECK(load_checkpoint(final_ckpt).step == 5);

  // compress a one-off prompt
  r = run_captured({"compress", "--checkpoint", final_ckpt.string(), "--prompt",
                    "Copy the key words now."}, tmp.path());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("id: prompt\n") != std::string::npos);
  CHECK(r.out.find("cr: ") != std::string::npos);
  CHECK(r.out.find("Instruction: ") != std::string::npos);

  // compress a dataset with removal annotations
  r = run_captured({"compress", "--checkpoint", final_ckpt.string(), "--dataset",
                    dataset_path.string(), "--show-removed"}, tmp.path());
  REQUIRE(r.exit_code == 0);
  for (const PromptRecord& record : corpus.records) {
    CHECK(r.out.find("id: " + record.id + "\n") != std::string::npos);
  }

  // identity evaluation produces the baseline report
  const fs::path identity_dir = tmp / "identity";
  r = run_captured({"eval", "--identity", "--dataset", dataset_path.string(),
                    "--config", config_path.string(), "--out",
                    (identity_dir / "eval.json").string()}, tmp.path());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("report: ") != std::string::npos);
  CHECK(baseline_mean_from_report(identity_dir / "eval.json") == 1.0);

  // policy evaluation normalized against the baseline run directory
  const fs::path policy_report = tmp / "policy" / "eval.json";
  r = run_captured({"eval", "--checkpoint", final_ckpt.string(), "--dataset",
                    dataset_path.string(), "--config", config_path.string(),
                    "--baseline-run", identity_dir.string(), "--out",
                    policy_report.string()}, tmp.path());
  REQUIRE(r.exit_code == 0);
  {
    std::ifstream in(policy_report);
    const json doc = json::parse(in);
    CHECK(doc.at("normalized_pct").is_number());
    CHECK(doc.at("rows").size() == corpus.records.size());
  }

  // naming the report file directly works the same way
  r = run_captured({"eval", "--checkpoint", final_ckpt.string(), "--dataset",
                    dataset_path.string(), "--config", config_path.string(),
                    "--baseline-run", (identity_dir / "eval.json").string(), "--out",
                    policy_report.string()}, tmp.path());
  CHECK(r.exit_code == 0);

  // analyze writes the removal CSV
  const fs::path csv_path = tmp / "removals.csv";
  r = run_captured({"analyze", "--checkpoint", final_ckpt.string(), "--dataset",
                    dataset_path.string(), "--out", csv_path.string()}, tmp.path());
  REQUIRE(r.exit_code == 0);
  const std::string csv = test::read_file(csv_path);
  CHECK(csv.rfind("token,freq_rank,appear,removed,ratio\n", 0) == 0);
  CHECK(count_lines(csv) > 1);

  // analyze without --out prints the same CSV to stdout
  r = run_captured({"analyze", "--checkpoint", final_ckpt.string(), "--dataset",
                    dataset_path.string()}, tmp.path());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out == csv);

  // the judge subcommand wires pairs through the configured backend; the
  // echo oracle produces no forced choice, so every pair is skipped
  const fs::path pairs_path = tmp / "pairs.jsonl";
  test::write_file(pairs_path,
                   R"({"task":"t1","response_a":"alpha","response_b":"beta"})"
                   "\n"
                   R"({"task":"t2","response_a":"gamma","response_b":"delta"})"
                   "\n");
  const fs::path judge_config_path = tmp / "judge-config.json";
  json judge_config = config_json(3);
  judge_config["backend"] = {{"kind", "oracle:echo-input"}, {"model", "cli-judge"}};
  test::write_file(judge_config_path, judge_config.dump(2));
  r = run_captured({"judge", "--pairs", pairs_path.string(), "--config",
                    judge_config_path.string(), "--seed", "3"}, tmp.path());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("pairs: 2\n") != std::string::npos);
  CHECK(r.out.find("skipped: 2\n") != std::string::npos);
  CHECK(r.out.find("win_rate: 0.0000 +/- 0.0000\n") != std::string::npos);

  // cache stats reflect the training traffic
  r = run_captured({"cache", "stats", "--dir", (tmp / "cache").string()}, tmp.path());
  REQUIRE(r.exit_code == 0);
  unsigned long long entries = 0;
  REQUIRE(std::sscanf(r.out.c_str(), "entries: %llu", &entries) == 1);
  CHECK(entries > 0);
}

TEST_CASE("train rejects a config without a dataset") {
  test::TempDir tmp;
  test::write_file(tmp / "config.json", "{}");
  const CliResult r =
      run_captured({"train", "--config", (tmp / "config.json").string()}, tmp.path());
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("dataset") != std::string::npos);
}

TEST_CASE("compressing an empty prompt reports the numeric error") {
  test::TempDir tmp;
  // build a checkpoint to point at
  const TrainerTokenizers tokenizers = TrainerTokenizers::all_unicode();
  FeatureConfig features;
  features.embedding_dim = 4;
  features.context_window = 1;
  features.vocab_size = 64;
  TrainingConfig config;
  TrainState state = make_initial_state(features, 4, config, tokenizers.policy);
  save_checkpoint(state, config, tmp / "ckpt");

  const CliResult r = run_captured(
      {"compress", "--checkpoint", (tmp / "ckpt").string(), "--prompt", ""},
      tmp.path());
  CHECK(r.exit_code == 1);
  CHECK(r.err.rfind("shear: ", 0) == 0);
}

}  // TEST_SUITE
