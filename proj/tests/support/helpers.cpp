#include "support/helpers.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "shear/errors.hpp"

namespace shear::test {

namespace fs = std::filesystem;

TempDir::TempDir() {
  std::random_device rd;
  for (int attempt = 0; attempt < 16; ++attempt) {
    std::ostringstream name;
    name << "shear-test-" << std::hex << rd() << rd();
    fs::path candidate = fs::temp_directory_path() / name.str();
    std::error_code ec;
    if (fs::create_directory(candidate, ec)) {
      path_ = candidate;
      return;
    }
  }
  throw StorageError("TempDir: could not create a unique directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw StorageError("write_file: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("read_file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_dataset(const fs::path& path, const std::vector<PromptRecord>& records) {
  std::ostringstream out;
  for (const PromptRecord& r : records) {
    nlohmann::json line{{"id", r.id}, {"instruction", r.instruction}};
    if (r.input) line["input"] = *r.input;
    if (r.reference_output) line["output"] = *r.reference_output;
    out << line.dump() << '\n';
  }
  write_file(path, out.str());
}

namespace {

const std::vector<std::string> kFillerPool = {"the", "of", "and", "to", "a",
                                              "in", "is", "on"};

const std::vector<std::string> kSalientPool = {
    "zebra",   "quartz",  "harbor",  "violet", "copper",  "meadow",  "falcon",
    "timber",  "lantern", "orchid",  "summit", "granite", "cobalt",  "willow",
    "ember",   "prairie", "anchor",  "maple",  "tundra",  "crystal", "beacon",
    "thistle", "canyon",  "saffron", "juniper", "magnet",  "pebble",  "raven",
    "cinder",  "fjord",   "hazel",   "osprey", "quill",   "reef",    "sage",
    "talon",   "umber",   "vortex",  "walnut", "yarrow"};

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

DistractorCorpus distractor_corpus_impl(size_t n, uint64_t seed,
                                        const DistractorOptions& options) {
  DistractorCorpus corpus;
  corpus.filler = kFillerPool;
  corpus.salient_pool = kSalientPool;
  Rng rng(seed);

  for (size_t i = 0; i < n; ++i) {
    // distinct salient words, then filler, shuffled together
    std::vector<std::string> pool = kSalientPool;
    rng.shuffle(pool);
    std::vector<std::string> words(pool.begin(),
                                   pool.begin() + static_cast<long>(options.salient_count));
    for (size_t f = 0; f < options.filler_count; ++f) {
      words.push_back(kFillerPool[rng.bounded(kFillerPool.size())]);
    }
    rng.shuffle(words);

    std::vector<std::string> salient_in_order;
    for (const std::string& w : words) {
      if (std::find(kFillerPool.begin(), kFillerPool.end(), w) == kFillerPool.end()) {
        salient_in_order.push_back(w);
      }
    }

    PromptRecord record;
    record.id = "d" + std::to_string(i);
    record.instruction = options.instruction;
    record.input = join_words(words);
    record.reference_output = join_words(salient_in_order);
    corpus.records.push_back(std::move(record));
  }
  return corpus;
}

}  // namespace

DistractorCorpus make_distractor_corpus(size_t n, uint64_t seed,
                                        const DistractorOptions& options) {
  return distractor_corpus_impl(n, seed, options);
}

DistractorCorpus make_micro_corpus(size_t n, uint64_t seed) {
  DistractorOptions options;
  options.salient_count = 4;
  options.filler_count = 2;
  options.instruction = "List items.";  // 3 maskable tokens, 9 total
  return distractor_corpus_impl(n, seed, options);
}

KeywordCorpus make_keyword_corpus(size_t n, uint64_t seed, const std::string& keyword) {
  KeywordCorpus corpus;
  corpus.keyword = keyword;
  Rng rng(seed);
  const std::string question = "Check whether the flagged term appears below:";

  for (size_t i = 0; i < n; ++i) {
    std::vector<std::string> pool = kSalientPool;
    rng.shuffle(pool);
    std::vector<std::string> words(pool.begin(), pool.begin() + 10);
    const bool has_keyword = rng.uniform01() < 0.5;
    if (has_keyword) {
      words[rng.bounded(words.size())] = keyword;
      corpus.keyword_indices.push_back(i);
    }

    PromptRecord record;
    record.id = "k" + std::to_string(i);
    record.instruction = question + " " + join_words(words);
    record.reference_output = has_keyword ? "yes" : "no";
    corpus.records.push_back(std::move(record));
  }
  return corpus;
}

CountingBackend::CountingBackend(std::unique_ptr<Backend> inner)
    : Backend(inner->descriptor()), inner_(std::move(inner)) {}

void CountingBackend::mark_original(const std::string& prompt_text) {
  std::lock_guard<std::mutex> lock(originals_mutex_);
  originals_.insert(prompt_text);
}

std::string CountingBackend::generate_impl(const GenRequest& request) {
  total_calls_.fetch_add(1);
  {
    std::lock_guard<std::mutex> lock(originals_mutex_);
    if (originals_.count(request.prompt_text)) original_calls_.fetch_add(1);
  }
  return inner_->generate(request).text;
}

FlakyBackend::FlakyBackend(BackendDescriptor descriptor, int failures_per_prompt,
                           int http_status)
    : Backend(std::move(descriptor)),
      failures_per_prompt_(failures_per_prompt),
      http_status_(http_status) {}

std::string FlakyBackend::generate_impl(const GenRequest& request) {
  attempts_.fetch_add(1);
  int failures = 0;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    failures = seen_[request.prompt_text]++;
  }
  if (failures < failures_per_prompt_) {
    if (http_status_ > 0) {
      throw BackendError(BackendError::Kind::Rejected, "synthetic rejection", http_status_);
    }
    throw BackendError(BackendError::Kind::Unavailable, "synthetic outage");
  }
  return "ok: " + request.prompt_text;
}

ConcurrencyProbeBackend::ConcurrencyProbeBackend(BackendDescriptor descriptor, int sleep_ms)
    : Backend(std::move(descriptor)), sleep_ms_(sleep_ms) {}

std::string ConcurrencyProbeBackend::generate_impl(const GenRequest&) {
  const int now = in_flight_.fetch_add(1) + 1;
  int seen = max_in_flight_.load();
  while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms_));
  in_flight_.fetch_sub(1);
  return "ok";
}

namespace {

// Pulls the two responses back out of a prompt built from
// kDefaultJudgeTemplate.
std::pair<std::string, std::string> parse_judge_prompt(const std::string& prompt) {
  const std::string first_tag = "Response 1: ";
  const std::string second_tag = "\nResponse 2: ";
  const std::string tail_tag = "\nBetter response";
  const size_t first = prompt.find(first_tag);
  const size_t second = prompt.find(second_tag, first);
  const size_t tail = prompt.find(tail_tag, second);
  if (first == std::string::npos || second == std::string::npos || tail == std::string::npos) {
    throw ContractError("judge prompt does not look like the default template");
  }
  const size_t a = first + first_tag.size();
  const size_t b = second + second_tag.size();
  return {prompt.substr(a, second - a), prompt.substr(b, tail - b)};
}

}  // namespace

ContentJudgeBackend::ContentJudgeBackend() : Backend(test_backend_descriptor("content-judge")) {}

std::string ContentJudgeBackend::generate_impl(const GenRequest& request) {
  auto [r1, r2] = parse_judge_prompt(request.prompt_text);
  return r1 <= r2 ? "1" : "2";
}

FirstSlotJudgeBackend::FirstSlotJudgeBackend()
    : Backend(test_backend_descriptor("first-slot-judge")) {}

std::string FirstSlotJudgeBackend::generate_impl(const GenRequest&) { return "1"; }

BackendDescriptor test_backend_descriptor(const std::string& model) {
  BackendDescriptor d;
  d.kind = BackendKind::OracleEchoInput;
  d.model = model;
  d.retry_base_ms = 1;  // keep retry tests fast
  return d;
}

size_t brute_force_lcs(const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
  if (a.empty() || b.empty()) return 0;
  if (a.back() == b.back()) {
    std::vector<int64_t> a2(a.begin(), a.end() - 1);
    std::vector<int64_t> b2(b.begin(), b.end() - 1);
    return 1 + brute_force_lcs(a2, b2);
  }
  std::vector<int64_t> a2(a.begin(), a.end() - 1);
  std::vector<int64_t> b2(b.begin(), b.end() - 1);
  return std::max(brute_force_lcs(a2, b), brute_force_lcs(a, b2));
}

double policy_loss(const PolicyParams& params, const FeatureConfig& config,
                   const RenderedPrompt& rendered, const ActionVector& action,
                   double advantage, double alpha) {
  Featurization features = featurize(rendered, config, params);
  TokenProbs probs = forward(params, features, rendered.maskable);
  LogProbEntropy lpe = log_prob_and_entropy(probs, action);
  return -advantage * lpe.log_prob - alpha * lpe.entropy;
}

namespace {

double fd_at(std::vector<double>& values, size_t i, const PolicyParams& params,
             const FeatureConfig& config, const RenderedPrompt& rendered,
             const ActionVector& action, double advantage, double alpha, double h) {
  const double saved = values[i];
  values[i] = saved + h;
  const double up = policy_loss(params, config, rendered, action, advantage, alpha);
  values[i] = saved - h;
  const double down = policy_loss(params, config, rendered, action, advantage, alpha);
  values[i] = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace

GradientBuffer finite_difference_gradient(const PolicyParams& params,
                                          const FeatureConfig& config,
                                          const RenderedPrompt& rendered,
                                          const ActionVector& action, double advantage,
                                          double alpha, double h) {
  PolicyParams work = params;
  GradientBuffer fd;
  fd.init_like(work);

  auto sweep = [&](std::vector<double>& values, std::vector<double>& out) {
    for (size_t i = 0; i < values.size(); ++i) {
      out[i] = fd_at(values, i, work, config, rendered, action, advantage, alpha, h);
    }
  };
  sweep(work.embedding, fd.embedding);
  sweep(work.w1, fd.w1);
  sweep(work.b1, fd.b1);
  sweep(work.w2, fd.w2);
  sweep(work.b2, fd.b2);
  sweep(work.w_out, fd.w_out);
  {
    const double saved = work.b_out;
    work.b_out = saved + h;
    const double up = policy_loss(work, config, rendered, action, advantage, alpha);
    work.b_out = saved - h;
    const double down = policy_loss(work, config, rendered, action, advantage, alpha);
    work.b_out = saved;
    fd.b_out = (up - down) / (2.0 * h);
  }
  return fd;
}

}  // namespace shear::test
