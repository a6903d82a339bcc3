#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shear/rng.hpp"
#include "shear/text.hpp"

namespace shear {

enum class EmbeddingProvider {
  TrainableEmbeddings,
  PrecomputedFile,
};

struct FeatureConfig {
  int embedding_dim = 64;
  int context_window = 2;  // tokens each side, window includes self
  bool feature_position_fraction = true;
  bool feature_segment_one_hot = true;
  bool feature_is_punct = true;
  int64_t vocab_size = 32768;
  EmbeddingProvider provider = EmbeddingProvider::TrainableEmbeddings;
  std::filesystem::path embedding_file;  // PrecomputedFile provider only

  // own embedding + window mean + enabled scalars
  int feature_dim() const {
    return 2 * embedding_dim + (feature_position_fraction ? 1 : 0) +
           (feature_segment_one_hot ? 3 : 0) + (feature_is_punct ? 1 : 0);
  }
  void validate() const;  // throws ConfigError on bad dims
};

// Two tanh hidden layers and a scalar-logit head over per-token features.
// Parameters are kept as doubles but live on the float32 grid (see
// quantize_to_f32) so checkpoints round-trip bit-exactly.
struct PolicyParams {
  static constexpr int kFormatVersion = 1;

  int64_t vocab_size = 0;
  int embedding_dim = 0;
  int feature_dim = 0;
  int hidden_width = 0;

  std::vector<double> embedding;  // vocab_size x embedding_dim, row-major
  std::vector<double> w1;         // hidden_width x feature_dim
  std::vector<double> b1;         // hidden_width
  std::vector<double> w2;         // hidden_width x hidden_width
  std::vector<double> b2;         // hidden_width
  std::vector<double> w_out;      // hidden_width
  double b_out = 0.0;

  size_t parameter_count() const;
  bool shapes_match(const FeatureConfig& config) const;
};

// Snaps every parameter onto the float32 grid. Kept as an explicit step
// after init and after each optimizer update rather than storing floats,
// so all math runs in double.
void quantize_to_f32(PolicyParams& params);
void quantize_to_f32(std::vector<double>& values);

// Seeded initialization: weights ~ N(0, 1/fan_in), embeddings ~ N(0, 0.1^2),
// biases zero except the output bias, which starts at `init_keep_bias` so the
// initial policy keeps nearly everything and exploration happens around the
// identity action. With the PrecomputedFile provider the embedding table is
// loaded from config.embedding_file instead and stays frozen in training.
PolicyParams init_params(const FeatureConfig& config, int hidden_width, Rng& rng,
                         double init_keep_bias = 2.0);

// Per-token feature rows plus the provenance needed to push gradients back
// into embedding rows.
struct Featurization {
  size_t n = 0;
  int feature_dim = 0;
  int window = 0;
  std::vector<double> rows;       // n x feature_dim, row-major
  std::vector<int64_t> emb_rows;  // embedding row used by each token

  const double* row(size_t i) const { return rows.data() + i * feature_dim; }
};

// Row i = concat(embedding of token i, mean embedding over window +-w,
// enabled scalar features). Token ids outside [0, vocab_size) fall back to
// the last embedding row, reserved for UNK; with a file vocab of V entries
// configure vocab_size = V + 1 so the tokenizer's unk id owns that row.
Featurization featurize(const RenderedPrompt& rendered, const FeatureConfig& config,
                        const PolicyParams& params);

struct TokenProbs {
  std::vector<double> probs;      // clamped to [1e-6, 1 - 1e-6]
  std::vector<uint8_t> maskable;  // copied from the rendered prompt
  size_t size() const { return probs.size(); }
};

inline constexpr double kProbClamp = 1e-6;

// MLP forward to per-token keep probabilities. Deterministic; throws
// NumericError on a non-finite intermediate.
TokenProbs forward(const PolicyParams& params, const Featurization& features,
                   const std::vector<uint8_t>& maskable);

// Independent Bernoulli(p_i) at each maskable position, in token order;
// non-maskable positions are forced to 1 and consume no randomness.
ActionVector sample_actions(const TokenProbs& probs, Rng& rng);

// bit_i = 1 iff p_i >= 0.5 on maskable positions (ties keep), 1 elsewhere.
// Per-token independence makes this the most probable action.
ActionVector greedy_actions(const TokenProbs& probs);

struct LogProbEntropy {
  double log_prob = 0.0;
  double entropy = 0.0;
};

// Sum over maskable positions of the Bernoulli log-likelihood and entropy;
// non-maskable positions contribute zero to both. Throws ContractError when
// lengths mismatch or the action clears a non-maskable bit.
LogProbEntropy log_prob_and_entropy(const TokenProbs& probs, const ActionVector& action);

struct GradientBuffer {
  std::vector<double> embedding;
  std::vector<double> w1, b1, w2, b2, w_out;
  double b_out = 0.0;

  void init_like(const PolicyParams& params);
  void clear();
};

// Accumulates the analytic gradient of
//   -advantage * log pi(action) - alpha * H(pi)
// into `grad` (additive across prompts). Embedding rows receive gradient
// only under the TrainableEmbeddings provider. Throws NumericError on a
// non-finite gradient.
void accumulate_policy_gradient(const PolicyParams& params, const FeatureConfig& config,
                                const Featurization& features,
                                const std::vector<uint8_t>& maskable,
                                const ActionVector& action, double advantage,
                                double alpha, GradientBuffer& grad);

// Loads a "vocab_size embedding_dim" header followed by one whitespace
// separated row per token into params.embedding. Dimensions must match.
void load_embedding_file(const std::filesystem::path& path, const FeatureConfig& config,
                         PolicyParams& params);

}  // namespace shear
