#include "shear/backend.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <thread>

#include "landmark_scan.hpp"
#include "shear/errors.hpp"
#include "shear/hash.hpp"

namespace shear {

namespace {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string oracle_config_digest(const BackendDescriptor& d) {
  switch (d.kind) {
    case BackendKind::OracleDistractorEcho: {
      std::vector<std::string> filler(d.filler_tokens);
      for (std::string& f : filler) f = ascii_lower(f);
      std::sort(filler.begin(), filler.end());
      std::string joined;
      for (const std::string& f : filler) {
        joined += f;
        joined += '\n';
      }
      return sha256_hex(joined).substr(0, 12);
    }
    case BackendKind::OracleKeywordTask:
      return sha256_hex(ascii_lower(d.keyword)).substr(0, 12);
    default:
      return "";
  }
}

std::string backend_identity(const BackendDescriptor& d) {
  switch (d.kind) {
    case BackendKind::Http:
      return "http:" + d.base_url;
    case BackendKind::OracleEchoInput:
      return "oracle:echo-input";
    default:
      return std::string(backend_kind_name(d.kind)) + ":" + oracle_config_digest(d);
  }
}

bool is_retryable(const BackendError& e) {
  if (e.kind != BackendError::Kind::Rejected) return true;  // unavailable, timeout
  return e.http_status == 429 || e.http_status >= 500;
}

// Jitter draws never touch the deterministic training streams.
double jitter_factor() {
  thread_local std::mt19937_64 engine{std::random_device{}()};
  return 0.5 + static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

class DistractorEchoBackend : public Backend {
 public:
  explicit DistractorEchoBackend(BackendDescriptor d) : Backend(std::move(d)) {
    for (const std::string& f : descriptor().filler_tokens) {
      filler_.push_back(ascii_lower(f));
    }
    std::sort(filler_.begin(), filler_.end());
  }

 protected:
  std::string generate_impl(const GenRequest& request) override {
    const ParsedPromptBodies bodies = parse_prompt_bodies(request.prompt_text);
    const TokenizerSpec spec = TokenizerSpec::unicode_rules();
    std::string out;
    int emitted = 0;
    for (const Token& t : tokenize(spec, bodies.input)) {
      if (emitted >= request.max_new_tokens) break;
      if (std::binary_search(filler_.begin(), filler_.end(), ascii_lower(t.text))) {
        continue;
      }
      if (!out.empty()) out.push_back(' ');
      out += t.text;
      ++emitted;
    }
    return out;
  }

 private:
  std::vector<std::string> filler_;
};

class KeywordTaskBackend : public Backend {
 public:
  explicit KeywordTaskBackend(BackendDescriptor d)
      : Backend(std::move(d)), keyword_(ascii_lower(descriptor().keyword)) {}

 protected:
  std::string generate_impl(const GenRequest& request) override {
    const ParsedPromptBodies bodies = parse_prompt_bodies(request.prompt_text);
    const TokenizerSpec spec = TokenizerSpec::unicode_rules();
    for (const Token& t : tokenize(spec, bodies.instruction)) {
      if (ascii_lower(t.text) == keyword_) return "yes";
    }
    return "no";
  }

 private:
  std::string keyword_;
};

class EchoInputBackend : public Backend {
 public:
  explicit EchoInputBackend(BackendDescriptor d) : Backend(std::move(d)) {}

 protected:
  std::string generate_impl(const GenRequest& request) override {
    const ParsedPromptBodies bodies = parse_prompt_bodies(request.prompt_text);
    const TokenizerSpec spec = TokenizerSpec::unicode_rules();
    std::vector<Token> tokens = tokenize(spec, bodies.input);
    if (tokens.size() > static_cast<size_t>(request.max_new_tokens)) {
      tokens.resize(static_cast<size_t>(request.max_new_tokens));
    }
    return detokenize(tokens, bodies.input);
  }
};

}  // namespace

const char* backend_kind_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::OracleDistractorEcho:
      return "oracle:distractor-echo";
    case BackendKind::OracleKeywordTask:
      return "oracle:keyword-task";
    case BackendKind::OracleEchoInput:
      return "oracle:echo-input";
    case BackendKind::Http:
      return "http";
  }
  return "?";
}

BackendKind backend_kind_from_name(const std::string& name) {
  if (name == "oracle:distractor-echo") return BackendKind::OracleDistractorEcho;
  if (name == "oracle:keyword-task") return BackendKind::OracleKeywordTask;
  if (name == "oracle:echo-input") return BackendKind::OracleEchoInput;
  if (name == "http") return BackendKind::Http;
  throw ConfigError("unknown backend kind: \"" + name + "\"");
}

void BackendDescriptor::validate() const {
  if (kind == BackendKind::Http) {
    if (base_url.empty()) throw ConfigError("http backend requires base_url");
    if (model.empty()) throw ConfigError("http backend requires model");
  }
  if (kind == BackendKind::OracleKeywordTask && keyword.empty()) {
    throw ConfigError("keyword-task backend requires a keyword");
  }
  if (default_temperature < 0.0) {
    throw ConfigError("default_temperature must be >= 0");
  }
  if (request_timeout_s <= 0.0) {
    throw ConfigError("request_timeout_s must be > 0");
  }
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (retry_base_ms < 0) throw ConfigError("retry_base_ms must be >= 0");
  if (concurrency_limit < 1) throw ConfigError("concurrency_limit must be >= 1");
}

ParsedPromptBodies parse_prompt_bodies(std::string_view prompt_text) {
  constexpr std::string_view kInstr = "Instruction: ";
  constexpr std::string_view kInput = "Input: ";
  constexpr std::string_view kOutput = "Output:";

  ParsedPromptBodies out;
  std::string_view rest = prompt_text;
  if (rest.substr(0, kInstr.size()) == kInstr) rest.remove_prefix(kInstr.size());
  // The output section always comes last, so its marker binds to the final
  // occurrence; the input marker binds to the first one after the
  // instruction.
  const size_t output_pos = internal::last_landmark(rest, kOutput);
  if (output_pos != std::string_view::npos) rest = rest.substr(0, output_pos);
  const size_t input_pos = internal::first_landmark(rest, kInput);
  if (input_pos == std::string_view::npos) {
    out.instruction = std::string(internal::rtrim(rest));
  } else {
    out.instruction = std::string(internal::rtrim(rest.substr(0, input_pos)));
    out.input = std::string(internal::rtrim(rest.substr(input_pos + kInput.size())));
    out.has_input = true;
  }
  return out;
}

Backend::Backend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  descriptor_.validate();
  id_ = backend_identity(descriptor_);
}

GenResult Backend::generate(const GenRequest& request) {
  if (request.max_new_tokens < 1) {
    throw ContractError("max_new_tokens must be >= 1");
  }
  // Hold a concurrency slot for the whole call, backoff sleeps included.
  std::unique_lock<std::mutex> lock(mutex_);
  slot_free_.wait(lock, [&] { return in_flight_ < descriptor_.concurrency_limit; });
  ++in_flight_;
  lock.unlock();

  struct Release {
    Backend* b;
    ~Release() {
      {
        std::lock_guard<std::mutex> lk(b->mutex_);
        --b->in_flight_;
      }
      b->slot_free_.notify_one();
    }
  } release{this};

  int attempt = 0;
  for (;;) {
    try {
      GenResult result;
      result.text = generate_impl(request);
      result.backend_id = id_;
      result.from_cache = false;
      return result;
    } catch (const BackendError& e) {
      if (!is_retryable(e) || attempt >= descriptor_.max_retries) throw;
      const double delay_ms = static_cast<double>(descriptor_.retry_base_ms) *
                              static_cast<double>(1ull << attempt) * jitter_factor();
      std::this_thread::sleep_for(
          std::chrono::milliseconds(static_cast<int64_t>(delay_ms)));
      ++attempt;
    }
  }
}

std::unique_ptr<Backend> make_http_backend(const BackendDescriptor& descriptor);

std::unique_ptr<Backend> make_backend(const BackendDescriptor& descriptor) {
  switch (descriptor.kind) {
    case BackendKind::OracleDistractorEcho:
      return std::make_unique<DistractorEchoBackend>(descriptor);
    case BackendKind::OracleKeywordTask:
      return std::make_unique<KeywordTaskBackend>(descriptor);
    case BackendKind::OracleEchoInput:
      return std::make_unique<EchoInputBackend>(descriptor);
    case BackendKind::Http:
      return make_http_backend(descriptor);
  }
  throw ConfigError("unknown backend kind");
}

}  // namespace shear
