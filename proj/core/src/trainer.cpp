#include "shear/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include <json.hpp>

#include "shear/checkpoint.hpp"
#include "shear/errors.hpp"

namespace shear {

namespace {

void adam_vec(std::vector<double>& x, std::vector<double>& m, std::vector<double>& v,
              const std::vector<double>& g, double gscale, const TrainingConfig& c,
              double bc1, double bc2) {
  for (size_t i = 0; i < x.size(); ++i) {
    const double gi = g[i] * gscale;
    m[i] = c.adam_beta1 * m[i] + (1.0 - c.adam_beta1) * gi;
    v[i] = c.adam_beta2 * v[i] + (1.0 - c.adam_beta2) * gi * gi;
    x[i] -= c.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.adam_eps);
  }
}

void adam_scalar(double& x, double& m, double& v, double g, double gscale,
                 const TrainingConfig& c, double bc1, double bc2) {
  const double gi = g * gscale;
  m = c.adam_beta1 * m + (1.0 - c.adam_beta1) * gi;
  v = c.adam_beta2 * v + (1.0 - c.adam_beta2) * gi * gi;
  x -= c.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + c.adam_eps);
}

void quantize_buffer_to_f32(GradientBuffer& buf) {
  quantize_to_f32(buf.embedding);
  quantize_to_f32(buf.w1);
  quantize_to_f32(buf.b1);
  quantize_to_f32(buf.w2);
  quantize_to_f32(buf.b2);
  quantize_to_f32(buf.w_out);
  buf.b_out = static_cast<double>(static_cast<float>(buf.b_out));
}

}  // namespace

void TrainingConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must be in (0, 1]");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (adam_eps <= 0.0) throw ConfigError("adam_eps must be > 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

void AdamState::init_like(const PolicyParams& params) {
  m.init_like(params);
  v.init_like(params);
}

std::string StepMetrics::to_json_line() const {
  nlohmann::ordered_json row{
      {"step", step},
      {"mean_reward", mean_reward},
      {"mean_cr", mean_cr},
      {"mean_rf", mean_rf},
      {"penalty_rate", penalty_rate},
      {"entropy", entropy},
      {"wall_ms", wall_ms},
      {"backend_calls", backend_calls},
      {"cache_hits", cache_hits},
  };
  return row.dump();
}

double compute_faithfulness(const std::string& original_output,
                            const std::string& compressed_output,
                            const TokenizerSpec& eval_spec) {
  return rouge_l(eval_spec, compressed_output, original_output).f1;
}

RewardBreakdown compute_reward(double r_f, const RenderedPrompt& original,
                               const std::string& compressed_text,
                               const TrainingConfig& config,
                               const TokenizerSpec& counting_spec) {
  if (!(r_f >= 0.0 && r_f <= 1.0)) {
    throw ContractError("r_f must be in [0, 1]");
  }
  RewardBreakdown b;
  b.r_f = r_f;
  if (config.reward_cr_includes_statements) {
    const size_t orig = tokenize(counting_spec, original.text).size();
    if (orig == 0) {
      throw NumericError("compression ratio undefined: empty original prompt");
    }
    const size_t comp = tokenize(counting_spec, compressed_text).size();
    b.cr = 1.0 - static_cast<double>(comp) / static_cast<double>(orig);
  } else {
    b.cr = compression_ratio(original, std::string_view(compressed_text),
                             counting_spec).cr;
  }
  b.penalized = r_f < config.tau;
  b.reward = b.penalized ? -config.lambda : b.cr;
  return b;
}

TrainState make_initial_state(const FeatureConfig& feature_config, int hidden_width,
                              const TrainingConfig& config,
                              const TokenizerSpec& policy_tokenizer,
                              double init_keep_bias) {
  config.validate();
  TrainState state;
  state.feature_config = feature_config;
  state.tokenizer_fingerprint = policy_tokenizer.fingerprint;
  Rng init_rng(derive_seed(config.seed, "init", 0));
  state.params = init_params(feature_config, hidden_width, init_rng, init_keep_bias);
  state.opt.init_like(state.params);
  state.rng = Rng(derive_seed(config.seed, "train", 0));
  return state;
}

StepMetrics scst_update(TrainState& state, const std::vector<const RenderedPrompt*>& batch,
                        Backend& backend, ResponseCache& cache,
                        const TrainingConfig& config,
                        const TrainerTokenizers& tokenizers) {
  if (batch.empty()) throw ContractError("scst_update: empty batch");
  const auto t0 = std::chrono::steady_clock::now();

  struct PromptWork {
    const RenderedPrompt* prompt = nullptr;
    Featurization feats;
    TokenProbs probs;
    double entropy = 0.0;
    ActionVector greedy;
    std::vector<ActionVector> samples;
    std::vector<std::string> compressed;  // [0] greedy, [1..k] samples
    std::vector<size_t> requests;         // [0] original, [1] greedy, [2..] samples
    bool failed = false;
  };

  const double temperature = backend.descriptor().default_temperature;
  const std::string& model = backend.descriptor().model;
  auto request_for = [&](const std::string& text) {
    GenRequest r;
    r.prompt_text = text;
    r.max_new_tokens = config.max_new_tokens;
    r.temperature = temperature;
    return r;
  };

  // Phase 1: policy work. All rng consumption happens here, in batch order,
  // so the stream is independent of backend timing.
  std::vector<PromptWork> work(batch.size());
  std::unordered_map<std::string, size_t> key_index;
  std::vector<GenRequest> requests;
  std::vector<uint64_t> instances;
  auto intern_request = [&](const std::string& text) {
    GenRequest req = request_for(text);
    std::string key = ResponseCache::key_hash(backend.id(), model, req);
    auto [it, inserted] = key_index.emplace(std::move(key), requests.size());
    if (inserted) {
      requests.push_back(std::move(req));
      instances.push_back(0);
    }
    ++instances[it->second];
    return it->second;
  };

  for (size_t b = 0; b < batch.size(); ++b) {
    PromptWork& w = work[b];
    w.prompt = batch[b];
    if (w.prompt->tokenizer_fingerprint != state.tokenizer_fingerprint) {
      throw ContractError("prompt " + w.prompt->id +
                          " was rendered with a different tokenizer than the policy");
    }
    try {
      w.feats = featurize(*w.prompt, state.feature_config, state.params);
      w.probs = forward(state.params, w.feats, w.prompt->maskable);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(state.step + 1) + ", prompt " +
                         w.prompt->id + ": " + e.what());
    }
    w.greedy = greedy_actions(w.probs);
    w.entropy = log_prob_and_entropy(w.probs, w.greedy).entropy;
    w.samples.reserve(static_cast<size_t>(config.k));
    for (int j = 0; j < config.k; ++j) {
      w.samples.push_back(sample_actions(w.probs, state.rng));
    }
    w.compressed.push_back(apply_actions(*w.prompt, w.greedy));
    for (const ActionVector& a : w.samples) {
      w.compressed.push_back(apply_actions(*w.prompt, a));
    }
    w.requests.push_back(intern_request(w.prompt->text));
    for (const std::string& text : w.compressed) {
      w.requests.push_back(intern_request(text));
    }
  }

  // Phase 2: resolve distinct requests, cache first, misses dispatched
  // concurrently up to the backend's limit.
  const std::vector<BatchResolution> resolutions = resolve_batch(cache, backend, requests);

  StepMetrics metrics;
  metrics.step = state.step + 1;
  for (size_t i = 0; i < resolutions.size(); ++i) {
    const BatchResolution& r = resolutions[i];
    if (!r.ok) continue;
    if (r.from_cache) {
      metrics.cache_hits += instances[i];
    } else {
      metrics.backend_calls += 1;
      metrics.cache_hits += instances[i] - 1;  // duplicates reuse the new entry
    }
  }

  // Phase 3: rewards, advantages, gradient accumulation.
  GradientBuffer grad;
  grad.init_like(state.params);
  size_t successful = 0;
  double sum_reward = 0.0, sum_cr = 0.0, sum_rf = 0.0, sum_entropy = 0.0;
  uint64_t penalized = 0, samples_total = 0;

  for (PromptWork& w : work) {
    bool all_ok = true;
    for (size_t r : w.requests) {
      if (!resolutions[r].ok) {
        all_ok = false;
        std::cerr << "step " << (state.step + 1) << ": skipping prompt " << w.prompt->id
                  << ": " << resolutions[r].error << "\n";
        break;
      }
    }
    if (!all_ok) {
      w.failed = true;
      ++metrics.skipped_prompts;
      continue;
    }

    const std::string& y_orig = resolutions[w.requests[0]].text;
    auto reward_of = [&](const std::string& compressed_text, const std::string& output) {
      const double r_f = compute_faithfulness(y_orig, output, tokenizers.faithfulness);
      return compute_reward(r_f, *w.prompt, compressed_text, config,
                            tokenizers.counting);
    };
    const RewardBreakdown greedy_reward =
        reward_of(w.compressed[0], resolutions[w.requests[1]].text);

    const double inv_k = 1.0 / static_cast<double>(config.k);
    for (int j = 0; j < config.k; ++j) {
      const RewardBreakdown rj =
          reward_of(w.compressed[static_cast<size_t>(1 + j)],
                    resolutions[w.requests[static_cast<size_t>(2 + j)]].text);
      const double advantage = rj.reward - greedy_reward.reward;
      accumulate_policy_gradient(state.params, state.feature_config, w.feats,
                                 w.prompt->maskable, w.samples[static_cast<size_t>(j)],
                                 advantage * inv_k, config.alpha * inv_k, grad);
      sum_reward += rj.reward;
      sum_cr += rj.cr;
      sum_rf += rj.r_f;
      penalized += rj.penalized ? 1 : 0;
      ++samples_total;
    }
    sum_entropy += w.entropy;
    ++successful;
  }

  if (successful == 0) {
    throw StepError("step " + std::to_string(state.step + 1) +
                    ": every prompt in the batch failed");
  }

  // Phase 4: one Adam update, then snap everything back onto the f32 grid
  // so checkpoints round-trip bit-exactly.
  const double gscale = 1.0 / static_cast<double>(successful);
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(config.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(config.adam_beta2, t);
  PolicyParams& p = state.params;
  AdamState& o = state.opt;
  const bool frozen_embeddings =
      state.feature_config.provider == EmbeddingProvider::PrecomputedFile;
  if (!frozen_embeddings) {
    adam_vec(p.embedding, o.m.embedding, o.v.embedding, grad.embedding, gscale, config,
             bc1, bc2);
  }
  adam_vec(p.w1, o.m.w1, o.v.w1, grad.w1, gscale, config, bc1, bc2);
  adam_vec(p.b1, o.m.b1, o.v.b1, grad.b1, gscale, config, bc1, bc2);
  adam_vec(p.w2, o.m.w2, o.v.w2, grad.w2, gscale, config, bc1, bc2);
  adam_vec(p.b2, o.m.b2, o.v.b2, grad.b2, gscale, config, bc1, bc2);
  adam_vec(p.w_out, o.m.w_out, o.v.w_out, grad.w_out, gscale, config, bc1, bc2);
  adam_scalar(p.b_out, o.m.b_out, o.v.b_out, grad.b_out, gscale, config, bc1, bc2);
  quantize_to_f32(p);
  quantize_buffer_to_f32(o.m);
  quantize_buffer_to_f32(o.v);

  ++state.step;
  metrics.mean_reward = sum_reward / static_cast<double>(samples_total);
  metrics.mean_cr = sum_cr / static_cast<double>(samples_total);
  metrics.mean_rf = sum_rf / static_cast<double>(samples_total);
  metrics.penalty_rate =
      static_cast<double>(penalized) / static_cast<double>(samples_total);
  metrics.entropy = sum_entropy / static_cast<double>(successful);
  metrics.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  state.last_metrics = metrics;
  return metrics;
}

std::vector<StepMetrics> train(TrainState& state, const std::vector<PromptRecord>& dataset,
                               Backend& backend, ResponseCache& cache,
                               const TrainingConfig& config,
                               const TrainerTokenizers& tokenizers,
                               const TrainOptions& options) {
  config.validate();
  if (dataset.empty()) throw ContractError("train: empty dataset");

  std::vector<RenderedPrompt> rendered;
  rendered.reserve(dataset.size());
  for (const PromptRecord& record : dataset) {
    rendered.push_back(segment_and_mask(record, tokenizers.policy));
  }

  std::ofstream metrics_out;
  if (!options.metrics_path.empty()) {
    metrics_out.open(options.metrics_path, std::ios::app);
    if (!metrics_out) {
      throw StorageError("cannot open metrics log " + options.metrics_path.string());
    }
  }
  auto save_at = [&](const std::string& name) {
    if (options.checkpoint_dir.empty()) return;
    save_checkpoint(state, config, options.checkpoint_dir / name);
  };

  const int64_t n = static_cast<int64_t>(rendered.size());
  const int64_t steps_per_epoch =
      (n + config.batch_size - 1) / config.batch_size;
  int64_t cached_epoch = -1;
  std::vector<size_t> order(rendered.size());

  std::vector<StepMetrics> log;
  log.reserve(static_cast<size_t>(std::max<int64_t>(0, config.steps - state.step)));
  for (int64_t s = state.step; s < config.steps; ++s) {
    const int64_t epoch = s / steps_per_epoch;
    if (epoch != cached_epoch) {
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng shuffle_rng(derive_seed(config.seed, "shuffle", static_cast<uint64_t>(epoch)));
      shuffle_rng.shuffle(order);
      cached_epoch = epoch;
    }
    const int64_t pos = (s % steps_per_epoch) * config.batch_size;
    std::vector<const RenderedPrompt*> batch;
    for (int64_t i = pos; i < std::min<int64_t>(pos + config.batch_size, n); ++i) {
      batch.push_back(&rendered[order[static_cast<size_t>(i)]]);
    }

    const StepMetrics metrics = scst_update(state, batch, backend, cache, config,
                                            tokenizers);
    if (metrics_out.is_open()) {
      metrics_out << metrics.to_json_line() << "\n";
      metrics_out.flush();
    }
    if (options.on_step) options.on_step(metrics);
    log.push_back(metrics);

    if (config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "step-%06lld",
                    static_cast<long long>(state.step));
      save_at(name);
    }
  }
  save_at("final");
  return log;
}

}  // namespace shear
