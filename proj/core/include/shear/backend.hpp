#pragma once

#include <memory>
#include <mutex>
#include <condition_variable>
#include <string>
#include <vector>

#include "shear/text.hpp"

namespace shear {

struct GenRequest {
  std::string prompt_text;
  int max_new_tokens = 30;
  double temperature = 0.0;
  std::vector<std::string> stop;
};

struct GenResult {
  std::string text;
  std::string backend_id;
  bool from_cache = false;
};

enum class BackendKind {
  OracleDistractorEcho,
  OracleKeywordTask,
  OracleEchoInput,
  Http,
};

const char* backend_kind_name(BackendKind kind);
BackendKind backend_kind_from_name(const std::string& name);  // ConfigError on unknown

struct BackendDescriptor {
  BackendKind kind = BackendKind::OracleDistractorEcho;
  std::string model;
  std::string base_url;      // http only
  std::string auth_env_var;  // http only, bearer token source
  double default_temperature = 0.0;
  double request_timeout_s = 30.0;
  int max_retries = 5;
  int retry_base_ms = 100;  // first backoff delay, doubles per attempt
  int concurrency_limit = 4;

  // oracle configuration
  std::vector<std::string> filler_tokens;  // distractor-echo: droppable set
  std::string keyword;                     // keyword-task: must-keep trigger

  void validate() const;
};

// The two bodies a black-box LM can recover from a rendered prompt's text
// by its template landmarks alone. Markers match at any whitespace boundary,
// not just after "\n": compressing away the token before a section header
// turns the newline into a plain space, and the oracles must still parse the
// result (dropping only filler must leave their output unchanged). Bodies
// come back right-trimmed since boundary whitespace does not survive
// compression.
struct ParsedPromptBodies {
  std::string instruction;
  std::string input;
  bool has_input = false;
};

ParsedPromptBodies parse_prompt_bodies(std::string_view prompt_text);

// A generation LM endpoint. generate() enforces the concurrency limit and
// retries transient failures (connect errors, timeouts, 429/5xx) with
// jittered exponential backoff; other failures surface as BackendError.
class Backend {
 public:
  explicit Backend(BackendDescriptor descriptor);
  virtual ~Backend() = default;

  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  const BackendDescriptor& descriptor() const { return descriptor_; }
  // Stable identity: kind, model, and a digest of behavior-defining oracle
  // configuration. Cache keys embed this.
  const std::string& id() const { return id_; }

  GenResult generate(const GenRequest& request);

 protected:
  virtual std::string generate_impl(const GenRequest& request) = 0;

 private:
  BackendDescriptor descriptor_;
  std::string id_;
  std::mutex mutex_;
  std::condition_variable slot_free_;
  int in_flight_ = 0;
};

std::unique_ptr<Backend> make_backend(const BackendDescriptor& descriptor);

}  // namespace shear
