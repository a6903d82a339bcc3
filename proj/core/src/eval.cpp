#include "shear/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "shear/errors.hpp"

namespace shear {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string one_decimal(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

std::string fill_template(const std::string& template_text, const std::string& task,
                          const std::string& first, const std::string& second) {
  std::string out = template_text;
  auto replace_all = [&](const std::string& slot, const std::string& value) {
    size_t pos = 0;
    bool found = false;
    while ((pos = out.find(slot, pos)) != std::string::npos) {
      out.replace(pos, slot.size(), value);
      pos += value.size();
      found = true;
    }
    return found;
  };
  const bool has_task = replace_all("{task}", task);
  const bool has_first = replace_all("{first}", first);
  const bool has_second = replace_all("{second}", second);
  if (!has_task || !has_first || !has_second) {
    throw ConfigError("judge template must contain {task}, {first}, and {second}");
  }
  return out;
}

// Forced-choice parse: the first '1' or '2' anywhere in the reply decides.
int parse_choice(const std::string& reply) {
  for (char c : reply) {
    if (c == '1') return 1;
    if (c == '2') return 2;
  }
  return 0;
}

}  // namespace

EvalReport evaluate_policy(const std::vector<PromptRecord>& dataset,
                           const TrainState& state, Backend& backend,
                           ResponseCache& cache, const TrainerTokenizers& tokenizers,
                           const EvalOptions& options) {
  struct RecordWork {
    RenderedPrompt rendered;
    ActionVector effective;
    std::string compressed;
    const std::string* reference = nullptr;
  };

  std::vector<RecordWork> work;
  work.reserve(dataset.size());
  std::vector<GenRequest> requests;
  requests.reserve(dataset.size());
  for (const PromptRecord& record : dataset) {
    if (!record.reference_output.has_value() || record.reference_output->empty()) {
      throw ContractError("record " + record.id +
                          " has no reference output; evaluation requires one");
    }
    RecordWork w;
    w.rendered = segment_and_mask(record, tokenizers.policy);
    if (w.rendered.tokenizer_fingerprint != state.tokenizer_fingerprint) {
      throw ContractError("record " + record.id +
                          " was rendered with a different tokenizer than the policy");
    }
    w.reference = &*record.reference_output;
    if (options.identity_policy) {
      w.effective = ActionVector::ones(w.rendered.size());
      w.compressed = w.rendered.text;
    } else {
      const Featurization feats = featurize(w.rendered, state.feature_config,
                                            state.params);
      const TokenProbs probs = forward(state.params, feats, w.rendered.maskable);
      const CompressedPrompt c = compress(w.rendered, greedy_actions(probs));
      w.effective = c.effective;
      w.compressed = c.text;
    }

    const size_t ref_tokens = tokenize(tokenizers.faithfulness, *w.reference).size();
    if (ref_tokens == 0) {
      throw ContractError("record " + record.id +
                          " has a reference with no tokens; cannot cap generation");
    }
    GenRequest req;
    req.prompt_text = w.compressed;
    req.max_new_tokens = static_cast<int>(ref_tokens);
    req.temperature = backend.descriptor().default_temperature;
    requests.push_back(std::move(req));
    work.push_back(std::move(w));
  }

  const std::vector<BatchResolution> resolutions =
      resolve_batch(cache, backend, requests);

  EvalReport report;
  report.rows.reserve(work.size());
  double sum_rouge = 0.0, sum_cr = 0.0;
  for (size_t i = 0; i < work.size(); ++i) {
    if (!resolutions[i].ok) {
      throw BackendError(BackendError::Kind::Unavailable,
                         "evaluation of record " + work[i].rendered.id +
                             " failed: " + resolutions[i].error);
    }
    EvalRow row;
    row.id = work[i].rendered.id;
    row.rouge_l_vs_reference =
        rouge_l(tokenizers.faithfulness, resolutions[i].text, *work[i].reference).f1;
    row.cr = compression_ratio(work[i].rendered, work[i].effective,
                               tokenizers.counting).cr;
    row.compressed_text = work[i].compressed;
    sum_rouge += row.rouge_l_vs_reference;
    sum_cr += row.cr;
    report.rows.push_back(std::move(row));
  }
  if (!report.rows.empty()) {
    report.mean_rouge_l = sum_rouge / static_cast<double>(report.rows.size());
    report.mean_cr = sum_cr / static_cast<double>(report.rows.size());
  }
  if (options.baseline_mean_rouge.has_value()) {
    if (*options.baseline_mean_rouge == 0.0) {
      throw NumericError("baseline mean ROUGE-L is zero; normalization undefined");
    }
    report.normalized_pct = 100.0 * report.mean_rouge_l / *options.baseline_mean_rouge;
  }
  return report;
}

std::string format_score_cell(double score, std::optional<double> normalized_pct) {
  if (!normalized_pct.has_value()) return one_decimal(score);
  return one_decimal(score) + " (" + one_decimal(*normalized_pct) + ")";
}

void write_eval_report_json(const EvalReport& report,
                            const std::filesystem::path& path) {
  ordered_json rows = ordered_json::array();
  for (const EvalRow& row : report.rows) {
    rows.push_back(ordered_json{{"id", row.id},
                                {"rouge_l", row.rouge_l_vs_reference},
                                {"cr", row.cr},
                                {"compressed_text", row.compressed_text}});
  }
  ordered_json doc{
      {"examples", report.rows.size()},
      {"mean_rouge_l", report.mean_rouge_l},
      {"mean_cr", report.mean_cr},
      {"normalized_pct",
       report.normalized_pct.has_value() ? ordered_json(*report.normalized_pct)
                                         : ordered_json(nullptr)},
      {"rows", std::move(rows)},
  };
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << doc.dump(2) << "\n")) {
    throw StorageError("cannot write eval report " + path.string());
  }
}

void write_eval_report_text(const EvalReport& report, std::ostream& os) {
  os << "examples:             " << report.rows.size() << "\n";
  os << "rouge_l (normalized): "
     << format_score_cell(100.0 * report.mean_rouge_l, report.normalized_pct) << "\n";
  os << "mean cr:              " << one_decimal(100.0 * report.mean_cr) << "\n";
}

double baseline_mean_from_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot read baseline report " + path.string());
  try {
    json doc = json::parse(in);
    return doc.at("mean_rouge_l").get<double>();
  } catch (const json::exception& e) {
    throw IntegrityError("baseline report " + path.string() +
                         " is malformed: " + e.what());
  }
}

RemovalStats removal_statistics(const std::vector<PromptRecord>& dataset,
                                const TrainState& state,
                                const TokenizerSpec& policy_tokenizer, size_t top_n) {
  struct Tally {
    uint64_t appear = 0;
    uint64_t removed = 0;
  };
  std::map<std::string, Tally> tallies;  // ordered: deterministic iteration

  for (const PromptRecord& record : dataset) {
    const RenderedPrompt rendered = segment_and_mask(record, policy_tokenizer);
    const Featurization feats = featurize(rendered, state.feature_config, state.params);
    const TokenProbs probs = forward(state.params, feats, rendered.maskable);
    const ActionVector greedy = greedy_actions(probs);
    for (size_t i = 0; i < rendered.size(); ++i) {
      if (!rendered.maskable[i]) continue;
      Tally& t = tallies[rendered.tokens[i].text];
      ++t.appear;
      if (!greedy.bits[i]) ++t.removed;
    }
  }

  std::vector<RemovalRow> rows;
  rows.reserve(tallies.size());
  for (const auto& [token, tally] : tallies) {
    RemovalRow row;
    row.token = token;
    row.appear = tally.appear;
    row.removed = tally.removed;
    row.ratio = static_cast<double>(tally.removed) / static_cast<double>(tally.appear);
    rows.push_back(std::move(row));
  }

  // Dense frequency rank: equal appear counts share a rank.
  std::sort(rows.begin(), rows.end(), [](const RemovalRow& a, const RemovalRow& b) {
    if (a.appear != b.appear) return a.appear > b.appear;
    return a.token < b.token;
  });
  int64_t rank = 0;
  uint64_t prev_appear = 0;
  for (RemovalRow& row : rows) {
    if (row.appear != prev_appear) {
      ++rank;
      prev_appear = row.appear;
    }
    row.freq_rank = rank;
  }
  if (rows.size() > top_n) rows.resize(top_n);

  std::sort(rows.begin(), rows.end(), [](const RemovalRow& a, const RemovalRow& b) {
    if (a.ratio != b.ratio) return a.ratio > b.ratio;
    return a.token < b.token;
  });
  return RemovalStats{std::move(rows)};
}

std::string format_removal_ratio(uint64_t removed, uint64_t appear) {
  char buf[40];
  const double pct =
      100.0 * static_cast<double>(removed) / static_cast<double>(appear);
  std::snprintf(buf, sizeof(buf), "%.2f", pct);
  return buf;
}

std::string removal_stats_csv(const RemovalStats& stats) {
  std::ostringstream os;
  os << "token,freq_rank,appear,removed,ratio\n";
  for (const RemovalRow& row : stats.rows) {
    std::string token = row.token;
    // CSV quoting for commas/quotes in token text.
    if (token.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : token) {
        quoted += c;
        if (c == '"') quoted += '"';
      }
      quoted += '"';
      token = quoted;
    }
    os << token << ',' << row.freq_rank << ',' << row.appear << ',' << row.removed
       << ',' << format_removal_ratio(row.removed, row.appear) << "\n";
  }
  return os.str();
}

const char* const kDefaultJudgeTemplate =
    "You are comparing two responses to the same task. Judge which response "
    "completes the task better. Answer with exactly one character: 1 if "
    "Response 1 is better, 2 if Response 2 is better.\n"
    "Task: {task}\n"
    "Response 1: {first}\n"
    "Response 2: {second}\n"
    "Better response (1 or 2):";

JudgeOutcome judge_win_rate(const std::vector<JudgePair>& pairs, Backend& judge_backend,
                            ResponseCache* cache, const std::string& template_text,
                            uint64_t seed, bool swap_all_positions) {
  Rng rng(derive_seed(seed, "judge", 0));
  JudgeOutcome outcome;
  for (const JudgePair& pair : pairs) {
    bool a_first = rng.bernoulli(0.5);
    if (swap_all_positions) a_first = !a_first;
    const std::string& first = a_first ? pair.response_a : pair.response_b;
    const std::string& second = a_first ? pair.response_b : pair.response_a;

    GenRequest req;
    req.prompt_text = fill_template(template_text, pair.task, first, second);
    req.max_new_tokens = 8;
    req.temperature = judge_backend.descriptor().default_temperature;
    const GenResult result = cache ? cached_generate(*cache, judge_backend, req)
                                   : judge_backend.generate(req);

    const int choice = parse_choice(result.text);
    if (choice == 0) {
      ++outcome.skipped;
      continue;
    }
    ++outcome.comparisons;
    const bool a_won = (choice == 1) == a_first;
    if (a_won) ++outcome.wins_compressed;
  }
  if (outcome.comparisons > 0) {
    outcome.win_rate = static_cast<double>(outcome.wins_compressed) /
                       static_cast<double>(outcome.comparisons);
    outcome.ci95_halfwidth =
        1.96 * std::sqrt(outcome.win_rate * (1.0 - outcome.win_rate) /
                         static_cast<double>(outcome.comparisons));
  }
  return outcome;
}

}  // namespace shear
