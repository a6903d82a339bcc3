#include "shear/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "shear/errors.hpp"

namespace shear {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp_prob(double p) {
  return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}

// Forward pass for one token: x -> tanh(W1 x + b1) -> tanh(W2 h1 + b2)
// -> w_out . h2 + b_out. h1/h2 are caller-provided scratch.
double forward_token(const PolicyParams& params, const double* x, double* h1,
                     double* h2) {
  const int f = params.feature_dim;
  const int h = params.hidden_width;
  for (int i = 0; i < h; ++i) {
    double acc = params.b1[static_cast<size_t>(i)];
    const double* row = params.w1.data() + static_cast<size_t>(i) * f;
    for (int j = 0; j < f; ++j) acc += row[j] * x[j];
    h1[i] = std::tanh(acc);
  }
  for (int i = 0; i < h; ++i) {
    double acc = params.b2[static_cast<size_t>(i)];
    const double* row = params.w2.data() + static_cast<size_t>(i) * h;
    for (int j = 0; j < h; ++j) acc += row[j] * h1[j];
    h2[i] = std::tanh(acc);
  }
  double z = params.b_out;
  for (int i = 0; i < h; ++i) z += params.w_out[static_cast<size_t>(i)] * h2[i];
  return z;
}

int64_t embedding_row_for(int64_t token_id, int64_t vocab_size) {
  // Out-of-range ids share the last row, reserved for UNK.
  if (token_id >= 0 && token_id < vocab_size) return token_id;
  return vocab_size - 1;
}

}  // namespace

void FeatureConfig::validate() const {
  if (embedding_dim < 1) {
    throw ConfigError("embedding_dim must be >= 1, got " + std::to_string(embedding_dim));
  }
  if (context_window < 0) {
    throw ConfigError("context_window must be >= 0, got " + std::to_string(context_window));
  }
  if (vocab_size < 1) {
    throw ConfigError("vocab_size must be >= 1, got " + std::to_string(vocab_size));
  }
  if (provider == EmbeddingProvider::PrecomputedFile && embedding_file.empty()) {
    throw ConfigError("precomputed-embedding-file provider requires embedding_file");
  }
}

size_t PolicyParams::parameter_count() const {
  return embedding.size() + w1.size() + b1.size() + w2.size() + b2.size() +
         w_out.size() + 1;
}

bool PolicyParams::shapes_match(const FeatureConfig& config) const {
  const size_t f = static_cast<size_t>(config.feature_dim());
  const size_t h = static_cast<size_t>(hidden_width);
  return vocab_size == config.vocab_size && embedding_dim == config.embedding_dim &&
         feature_dim == config.feature_dim() &&
         embedding.size() == static_cast<size_t>(vocab_size) * embedding_dim &&
         w1.size() == h * f && b1.size() == h && w2.size() == h * h &&
         b2.size() == h && w_out.size() == h;
}

void quantize_to_f32(std::vector<double>& values) {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

void quantize_to_f32(PolicyParams& params) {
  quantize_to_f32(params.embedding);
  quantize_to_f32(params.w1);
  quantize_to_f32(params.b1);
  quantize_to_f32(params.w2);
  quantize_to_f32(params.b2);
  quantize_to_f32(params.w_out);
  params.b_out = static_cast<double>(static_cast<float>(params.b_out));
}

PolicyParams init_params(const FeatureConfig& config, int hidden_width, Rng& rng,
                         double init_keep_bias) {
  config.validate();
  if (hidden_width < 1) {
    throw ConfigError("hidden_width must be >= 1, got " + std::to_string(hidden_width));
  }
  PolicyParams p;
  p.vocab_size = config.vocab_size;
  p.embedding_dim = config.embedding_dim;
  p.feature_dim = config.feature_dim();
  p.hidden_width = hidden_width;

  const size_t f = static_cast<size_t>(p.feature_dim);
  const size_t h = static_cast<size_t>(hidden_width);
  p.embedding.resize(static_cast<size_t>(p.vocab_size) * p.embedding_dim);
  p.w1.resize(h * f);
  p.b1.assign(h, 0.0);
  p.w2.resize(h * h);
  p.b2.assign(h, 0.0);
  p.w_out.resize(h);

  for (double& v : p.embedding) v = 0.1 * rng.normal();
  const double s1 = 1.0 / std::sqrt(static_cast<double>(f));
  for (double& v : p.w1) v = s1 * rng.normal();
  const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
  for (double& v : p.w2) v = s2 * rng.normal();
  for (double& v : p.w_out) v = s2 * rng.normal();
  p.b_out = init_keep_bias;

  if (config.provider == EmbeddingProvider::PrecomputedFile) {
    load_embedding_file(config.embedding_file, config, p);
  }
  quantize_to_f32(p);
  return p;
}

Featurization featurize(const RenderedPrompt& rendered, const FeatureConfig& config,
                        const PolicyParams& params) {
  if (!params.shapes_match(config)) {
    throw ContractError("policy parameter shapes do not match the feature config");
  }
  const size_t n = rendered.tokens.size();
  const int d = config.feature_dim();
  const int e = config.embedding_dim;
  const int w = config.context_window;

  Featurization out;
  out.n = n;
  out.feature_dim = d;
  out.window = w;
  out.rows.assign(n * static_cast<size_t>(d), 0.0);
  out.emb_rows.resize(n);
  for (size_t i = 0; i < n; ++i) {
    out.emb_rows[i] = embedding_row_for(rendered.tokens[i].id, config.vocab_size);
  }

  for (size_t i = 0; i < n; ++i) {
    double* row = out.rows.data() + i * static_cast<size_t>(d);
    const double* own = params.embedding.data() + out.emb_rows[i] * e;
    std::copy(own, own + e, row);

    const size_t lo = i >= static_cast<size_t>(w) ? i - w : 0;
    const size_t hi = std::min(n - 1, i + static_cast<size_t>(w));
    const double inv = 1.0 / static_cast<double>(hi - lo + 1);
    for (size_t j = lo; j <= hi; ++j) {
      const double* ctx = params.embedding.data() + out.emb_rows[j] * e;
      for (int k = 0; k < e; ++k) row[e + k] += ctx[k];
    }
    for (int k = 0; k < e; ++k) row[e + k] *= inv;

    int off = 2 * e;
    if (config.feature_position_fraction) {
      row[off++] = static_cast<double>(i) / static_cast<double>(n);
    }
    if (config.feature_segment_one_hot) {
      row[off + static_cast<int>(rendered.segments[i])] = 1.0;
      off += 3;
    }
    if (config.feature_is_punct) {
      row[off++] = is_punctuation_text(rendered.tokens[i].text) ? 1.0 : 0.0;
    }
  }
  return out;
}

TokenProbs forward(const PolicyParams& params, const Featurization& features,
                   const std::vector<uint8_t>& maskable) {
  if (features.feature_dim != params.feature_dim) {
    throw ContractError("feature width " + std::to_string(features.feature_dim) +
                        " does not match first layer width " +
                        std::to_string(params.feature_dim));
  }
  if (maskable.size() != features.n) {
    throw ContractError("maskable flags length does not match token count");
  }
  TokenProbs out;
  out.probs.resize(features.n);
  out.maskable = maskable;
  std::vector<double> h1(static_cast<size_t>(params.hidden_width));
  std::vector<double> h2(static_cast<size_t>(params.hidden_width));
  for (size_t i = 0; i < features.n; ++i) {
    const double z = forward_token(params, features.row(i), h1.data(), h2.data());
    if (!std::isfinite(z)) {
      throw NumericError("forward: non-finite logit at token " + std::to_string(i));
    }
    out.probs[i] = clamp_prob(sigmoid(z));
  }
  return out;
}

ActionVector sample_actions(const TokenProbs& probs, Rng& rng) {
  ActionVector a;
  a.bits.resize(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) {
    if (!probs.maskable[i]) {
      a.bits[i] = 1;
    } else {
      a.bits[i] = rng.bernoulli(probs.probs[i]) ? 1 : 0;
    }
  }
  return a;
}

ActionVector greedy_actions(const TokenProbs& probs) {
  ActionVector a;
  a.bits.resize(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) {
    a.bits[i] = (!probs.maskable[i] || probs.probs[i] >= 0.5) ? 1 : 0;
  }
  return a;
}

LogProbEntropy log_prob_and_entropy(const TokenProbs& probs, const ActionVector& action) {
  if (action.size() != probs.size()) {
    throw ContractError("action length " + std::to_string(action.size()) +
                        " does not match probability count " +
                        std::to_string(probs.size()));
  }
  LogProbEntropy out;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (!probs.maskable[i]) {
      if (!action.bits[i]) {
        throw ContractError("action clears non-maskable token " + std::to_string(i));
      }
      continue;
    }
    const double p = probs.probs[i];
    out.log_prob += action.bits[i] ? std::log(p) : std::log(1.0 - p);
    out.entropy -= p * std::log(p) + (1.0 - p) * std::log(1.0 - p);
  }
  return out;
}

void GradientBuffer::init_like(const PolicyParams& params) {
  embedding.assign(params.embedding.size(), 0.0);
  w1.assign(params.w1.size(), 0.0);
  b1.assign(params.b1.size(), 0.0);
  w2.assign(params.w2.size(), 0.0);
  b2.assign(params.b2.size(), 0.0);
  w_out.assign(params.w_out.size(), 0.0);
  b_out = 0.0;
}

void GradientBuffer::clear() {
  std::fill(embedding.begin(), embedding.end(), 0.0);
  std::fill(w1.begin(), w1.end(), 0.0);
  std::fill(b1.begin(), b1.end(), 0.0);
  std::fill(w2.begin(), w2.end(), 0.0);
  std::fill(b2.begin(), b2.end(), 0.0);
  std::fill(w_out.begin(), w_out.end(), 0.0);
  b_out = 0.0;
}

void accumulate_policy_gradient(const PolicyParams& params, const FeatureConfig& config,
                                const Featurization& features,
                                const std::vector<uint8_t>& maskable,
                                const ActionVector& action, double advantage,
                                double alpha, GradientBuffer& grad) {
  if (!std::isfinite(advantage)) {
    throw NumericError("policy gradient: non-finite advantage");
  }
  if (action.size() != features.n || maskable.size() != features.n) {
    throw ContractError("policy gradient: length mismatch");
  }
  if (grad.w1.size() != params.w1.size()) {
    throw ContractError("gradient buffer shape does not match parameters");
  }

  const int f = params.feature_dim;
  const int h = params.hidden_width;
  const int e = params.embedding_dim;
  const bool train_embeddings = config.provider == EmbeddingProvider::TrainableEmbeddings;

  std::vector<double> h1(static_cast<size_t>(h)), h2(static_cast<size_t>(h));
  std::vector<double> dh1(static_cast<size_t>(h)), dh2(static_cast<size_t>(h));
  std::vector<double> da1(static_cast<size_t>(h)), da2(static_cast<size_t>(h));
  std::vector<double> dx(static_cast<size_t>(f));

  for (size_t i = 0; i < features.n; ++i) {
    if (!maskable[i]) continue;  // zero loss contribution

    const double* x = features.row(i);
    const double z = forward_token(params, x, h1.data(), h2.data());
    const double p_raw = sigmoid(z);
    const bool clamped = p_raw < kProbClamp || p_raw > 1.0 - kProbClamp;
    const double p = clamp_prob(p_raw);

    // d/dp of [-A log pi - alpha H] for a Bernoulli factor.
    const double a_i = action.bits[i] ? 1.0 : 0.0;
    const double dldp = -advantage * (a_i / p - (1.0 - a_i) / (1.0 - p)) +
                        alpha * std::log(p / (1.0 - p));
    const double dz = clamped ? 0.0 : dldp * p_raw * (1.0 - p_raw);
    if (!std::isfinite(dz)) {
      throw NumericError("policy gradient: non-finite at token " + std::to_string(i));
    }
    if (dz == 0.0) continue;

    grad.b_out += dz;
    for (int j = 0; j < h; ++j) {
      grad.w_out[static_cast<size_t>(j)] += dz * h2[static_cast<size_t>(j)];
      dh2[static_cast<size_t>(j)] = dz * params.w_out[static_cast<size_t>(j)];
    }

    for (int j = 0; j < h; ++j) {
      da2[static_cast<size_t>(j)] =
          dh2[static_cast<size_t>(j)] *
          (1.0 - h2[static_cast<size_t>(j)] * h2[static_cast<size_t>(j)]);
    }
    std::fill(dh1.begin(), dh1.end(), 0.0);
    for (int j = 0; j < h; ++j) {
      const double d = da2[static_cast<size_t>(j)];
      if (d == 0.0) continue;
      double* gw2 = grad.w2.data() + static_cast<size_t>(j) * h;
      const double* pw2 = params.w2.data() + static_cast<size_t>(j) * h;
      for (int k = 0; k < h; ++k) {
        gw2[k] += d * h1[static_cast<size_t>(k)];
        dh1[static_cast<size_t>(k)] += d * pw2[k];
      }
      grad.b2[static_cast<size_t>(j)] += d;
    }

    for (int j = 0; j < h; ++j) {
      da1[static_cast<size_t>(j)] =
          dh1[static_cast<size_t>(j)] *
          (1.0 - h1[static_cast<size_t>(j)] * h1[static_cast<size_t>(j)]);
    }
    std::fill(dx.begin(), dx.end(), 0.0);
    for (int j = 0; j < h; ++j) {
      const double d = da1[static_cast<size_t>(j)];
      if (d == 0.0) continue;
      double* gw1 = grad.w1.data() + static_cast<size_t>(j) * f;
      const double* pw1 = params.w1.data() + static_cast<size_t>(j) * f;
      for (int k = 0; k < f; ++k) {
        gw1[k] += d * x[k];
        dx[static_cast<size_t>(k)] += d * pw1[k];
      }
      grad.b1[static_cast<size_t>(j)] += d;
    }

    if (train_embeddings) {
      // Own-embedding slice flows to this token's row; the window-mean
      // slice fans out over the window rows it averaged.
      double* own = grad.embedding.data() + features.emb_rows[i] * e;
      for (int k = 0; k < e; ++k) own[k] += dx[static_cast<size_t>(k)];

      const size_t w = static_cast<size_t>(features.window);
      const size_t lo = i >= w ? i - w : 0;
      const size_t hi = std::min(features.n - 1, i + w);
      const double inv = 1.0 / static_cast<double>(hi - lo + 1);
      for (size_t j = lo; j <= hi; ++j) {
        double* ctx = grad.embedding.data() + features.emb_rows[j] * e;
        for (int k = 0; k < e; ++k) ctx[k] += inv * dx[static_cast<size_t>(e + k)];
      }
    }
  }
}

void load_embedding_file(const std::filesystem::path& path, const FeatureConfig& config,
                         PolicyParams& params) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("embedding file not readable: " + path.string());
  }
  int64_t rows = 0;
  int cols = 0;
  if (!(in >> rows >> cols)) {
    throw ConfigError("embedding file missing 'vocab_size embedding_dim' header: " +
                      path.string());
  }
  if (rows != config.vocab_size || cols != config.embedding_dim) {
    throw ConfigError("embedding file is " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " but config expects " +
                      std::to_string(config.vocab_size) + "x" +
                      std::to_string(config.embedding_dim));
  }
  const size_t total = static_cast<size_t>(rows) * static_cast<size_t>(cols);
  params.embedding.resize(total);
  for (size_t i = 0; i < total; ++i) {
    if (!(in >> params.embedding[i])) {
      throw ConfigError("embedding file truncated at value " + std::to_string(i) +
                        " of " + std::to_string(total));
    }
  }
}

}  // namespace shear
