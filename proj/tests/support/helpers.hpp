#pragma once

// Shared test fixtures: throwaway directories, synthetic corpora with known
// optimal behavior, and instrumented Backend subclasses.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "shear/backend.hpp"
#include "shear/policy.hpp"
#include "shear/rng.hpp"
#include "shear/text.hpp"

namespace shear::test {

// Unique directory under the system temp root, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const char* leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// Serializes records to the JSONL layout parse_dataset reads.
void write_dataset(const std::filesystem::path& path, const std::vector<PromptRecord>& records);

// Corpus for the distractor-echo oracle. Inputs mix `salient_count` words
// drawn from a content pool with `filler_count` words from the filler set;
// the oracle echoes exactly the salient words, so removing filler (or any
// instruction token) leaves the output unchanged while removing a salient
// word costs recall. reference_output is the original prompt's oracle echo.
struct DistractorCorpus {
  std::vector<PromptRecord> records;
  std::vector<std::string> filler;        // configure the backend with this
  std::vector<std::string> salient_pool;  // every non-filler input word
};

struct DistractorOptions {
  size_t salient_count = 5;
  size_t filler_count = 2;
  std::string instruction = "Copy the key terms from the input list.";
};

DistractorCorpus make_distractor_corpus(size_t n, uint64_t seed,
                                        const DistractorOptions& options = {});

// Corpus for the keyword-task oracle: instructions are a fixed question
// followed by noise words, containing `keyword` exactly once on "yes"
// records. reference_output is the oracle's answer for the original prompt.
struct KeywordCorpus {
  std::vector<PromptRecord> records;
  std::string keyword;
  std::vector<size_t> keyword_indices;  // records whose instruction has the keyword
};

KeywordCorpus make_keyword_corpus(size_t n, uint64_t seed, const std::string& keyword = "alpha");

// Distractor-echo records small enough for exhaustive action search
// (maskable count <= 12).
DistractorCorpus make_micro_corpus(size_t n, uint64_t seed);

// Forwards to an inner backend, counting generate_impl invocations (which
// only happen on cache misses). Prompts registered via mark_original are
// tallied separately. Thread safe.
class CountingBackend : public Backend {
 public:
  explicit CountingBackend(std::unique_ptr<Backend> inner);

  void mark_original(const std::string& prompt_text);
  uint64_t total_calls() const { return total_calls_.load(); }
  uint64_t original_calls() const { return original_calls_.load(); }

 protected:
  std::string generate_impl(const GenRequest& request) override;

 private:
  std::unique_ptr<Backend> inner_;
  std::set<std::string> originals_;
  mutable std::mutex originals_mutex_;
  std::atomic<uint64_t> total_calls_{0};
  std::atomic<uint64_t> original_calls_{0};
};

// Fails the first `failures_per_prompt` attempts for each distinct prompt
// with the configured error, then answers "ok: <prompt>".
class FlakyBackend : public Backend {
 public:
  FlakyBackend(BackendDescriptor descriptor, int failures_per_prompt, int http_status);

  uint64_t attempts() const { return attempts_.load(); }

 protected:
  std::string generate_impl(const GenRequest& request) override;

 private:
  int failures_per_prompt_;
  int http_status_;
  std::map<std::string, int> seen_;
  std::mutex mutex_;
  std::atomic<uint64_t> attempts_{0};
};

// Sleeps inside generate_impl and records the highest number of concurrent
// callers observed, to pin the backend's concurrency limit.
class ConcurrencyProbeBackend : public Backend {
 public:
  ConcurrencyProbeBackend(BackendDescriptor descriptor, int sleep_ms);

  int max_in_flight() const { return max_in_flight_.load(); }

 protected:
  std::string generate_impl(const GenRequest& request) override;

 private:
  int sleep_ms_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

// A judge whose preference depends only on response content (the
// lexicographically smaller response wins), so swapping positions must not
// change any outcome. Expects prompts built from kDefaultJudgeTemplate.
class ContentJudgeBackend : public Backend {
 public:
  ContentJudgeBackend();

 protected:
  std::string generate_impl(const GenRequest& request) override;
};

// A maximally position-biased judge: always answers "1".
class FirstSlotJudgeBackend : public Backend {
 public:
  FirstSlotJudgeBackend();

 protected:
  std::string generate_impl(const GenRequest& request) override;
};

// Descriptor for in-process test backends that need no oracle config; the
// model string keeps cache identities distinct between tests.
BackendDescriptor test_backend_descriptor(const std::string& model);

// Reference LCS by exhaustive recursion, for cross-checking the DP.
size_t brute_force_lcs(const std::vector<int64_t>& a, const std::vector<int64_t>& b);

// Loss whose gradient accumulate_policy_gradient computes:
//   -advantage * log pi(action) - alpha * H(pi).
// Featurization is recomputed from params, so embedding perturbations count.
double policy_loss(const PolicyParams& params, const FeatureConfig& config,
                   const RenderedPrompt& rendered, const ActionVector& action,
                   double advantage, double alpha);

// Central-difference gradient of policy_loss with respect to every
// parameter, laid out like GradientBuffer.
GradientBuffer finite_difference_gradient(const PolicyParams& params,
                                          const FeatureConfig& config,
                                          const RenderedPrompt& rendered,
                                          const ActionVector& action, double advantage,
                                          double alpha, double h = 1e-4);

}  // namespace shear::test
