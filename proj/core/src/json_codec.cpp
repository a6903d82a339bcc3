#include "json_codec.hpp"

#include <algorithm>

#include "shear/errors.hpp"

namespace shear::codec {

using nlohmann::json;
using nlohmann::ordered_json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
  if (!obj.is_object()) {
    throw ConfigError(context + " must be a JSON object");
  }
  for (const auto& [key, value] : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return key == a; });
    if (!known) {
      throw ConfigError("unknown key \"" + key + "\" in " + context);
    }
  }
}

namespace {

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) {
    it->get_to(out);
  }
}

void read_path(const json& obj, const char* key, std::filesystem::path& out) {
  if (auto it = obj.find(key); it != obj.end()) {
    out = it->get<std::string>();
  }
}

}  // namespace

ordered_json feature_config_json(const FeatureConfig& config) {
  return ordered_json{
      {"embedding_dim", config.embedding_dim},
      {"context_window", config.context_window},
      {"feature_position_fraction", config.feature_position_fraction},
      {"feature_segment_one_hot", config.feature_segment_one_hot},
      {"feature_is_punct", config.feature_is_punct},
      {"vocab_size", config.vocab_size},
      {"provider", config.provider == EmbeddingProvider::TrainableEmbeddings
                       ? "trainable-embeddings"
                       : "precomputed-embedding-file"},
      {"embedding_file", config.embedding_file.string()},
  };
}

FeatureConfig feature_config_from_json(const json& obj, const std::string& context) {
  check_keys(obj,
             {"embedding_dim", "context_window", "feature_position_fraction",
              "feature_segment_one_hot", "feature_is_punct", "vocab_size", "provider",
              "embedding_file"},
             context);
  FeatureConfig config;
  read(obj, "embedding_dim", config.embedding_dim);
  read(obj, "context_window", config.context_window);
  read(obj, "feature_position_fraction", config.feature_position_fraction);
  read(obj, "feature_segment_one_hot", config.feature_segment_one_hot);
  read(obj, "feature_is_punct", config.feature_is_punct);
  read(obj, "vocab_size", config.vocab_size);
  if (auto it = obj.find("provider"); it != obj.end()) {
    const std::string provider = it->get<std::string>();
    if (provider == "trainable-embeddings") {
      config.provider = EmbeddingProvider::TrainableEmbeddings;
    } else if (provider == "precomputed-embedding-file") {
      config.provider = EmbeddingProvider::PrecomputedFile;
    } else {
      throw ConfigError("unknown embedding provider \"" + provider + "\" in " + context);
    }
  }
  read_path(obj, "embedding_file", config.embedding_file);
  config.validate();
  return config;
}

ordered_json training_config_json(const TrainingConfig& config) {
  return ordered_json{
      {"tau", config.tau},
      {"lambda", config.lambda},
      {"alpha", config.alpha},
      {"k", config.k},
      {"max_new_tokens", config.max_new_tokens},
      {"batch_size", config.batch_size},
      {"learning_rate", config.learning_rate},
      {"steps", config.steps},
      {"seed", config.seed},
      {"adam_beta1", config.adam_beta1},
      {"adam_beta2", config.adam_beta2},
      {"adam_eps", config.adam_eps},
      {"checkpoint_every", config.checkpoint_every},
      {"reward_cr_includes_statements", config.reward_cr_includes_statements},
  };
}

TrainingConfig training_config_from_json(const json& obj, const std::string& context) {
  check_keys(obj,
             {"tau", "lambda", "alpha", "k", "max_new_tokens", "batch_size",
              "learning_rate", "steps", "seed", "adam_beta1", "adam_beta2", "adam_eps",
              "checkpoint_every", "reward_cr_includes_statements"},
             context);
  TrainingConfig config;
  read(obj, "tau", config.tau);
  read(obj, "lambda", config.lambda);
  read(obj, "alpha", config.alpha);
  read(obj, "k", config.k);
  read(obj, "max_new_tokens", config.max_new_tokens);
  read(obj, "batch_size", config.batch_size);
  read(obj, "learning_rate", config.learning_rate);
  read(obj, "steps", config.steps);
  read(obj, "seed", config.seed);
  read(obj, "adam_beta1", config.adam_beta1);
  read(obj, "adam_beta2", config.adam_beta2);
  read(obj, "adam_eps", config.adam_eps);
  read(obj, "checkpoint_every", config.checkpoint_every);
  read(obj, "reward_cr_includes_statements", config.reward_cr_includes_statements);
  config.validate();
  return config;
}

ordered_json backend_descriptor_json(const BackendDescriptor& descriptor) {
  return ordered_json{
      {"kind", backend_kind_name(descriptor.kind)},
      {"model", descriptor.model},
      {"base_url", descriptor.base_url},
      {"auth_env_var", descriptor.auth_env_var},
      {"default_temperature", descriptor.default_temperature},
      {"request_timeout_s", descriptor.request_timeout_s},
      {"max_retries", descriptor.max_retries},
      {"retry_base_ms", descriptor.retry_base_ms},
      {"concurrency_limit", descriptor.concurrency_limit},
      {"filler_tokens", descriptor.filler_tokens},
      {"keyword", descriptor.keyword},
  };
}

BackendDescriptor backend_descriptor_from_json(const json& obj,
                                               const std::string& context) {
  check_keys(obj,
             {"kind", "model", "base_url", "auth_env_var", "default_temperature",
              "request_timeout_s", "max_retries", "retry_base_ms", "concurrency_limit",
              "filler_tokens", "keyword"},
             context);
  BackendDescriptor descriptor;
  if (auto it = obj.find("kind"); it != obj.end()) {
    descriptor.kind = backend_kind_from_name(it->get<std::string>());
  }
  read(obj, "model", descriptor.model);
  read(obj, "base_url", descriptor.base_url);
  read(obj, "auth_env_var", descriptor.auth_env_var);
  read(obj, "default_temperature", descriptor.default_temperature);
  read(obj, "request_timeout_s", descriptor.request_timeout_s);
  read(obj, "max_retries", descriptor.max_retries);
  read(obj, "retry_base_ms", descriptor.retry_base_ms);
  read(obj, "concurrency_limit", descriptor.concurrency_limit);
  read(obj, "filler_tokens", descriptor.filler_tokens);
  read(obj, "keyword", descriptor.keyword);
  descriptor.validate();
  return descriptor;
}

}  // namespace shear::codec
