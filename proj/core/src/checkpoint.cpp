#include "shear/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "json_codec.hpp"
#include "shear/errors.hpp"

namespace shear {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

struct BlobRef {
  std::string name;
  const std::vector<double>* vec = nullptr;  // vector blobs
  const double* scalar = nullptr;            // scalar blobs (b_out and moments)
  std::vector<int64_t> shape;
};

std::vector<BlobRef> blob_layout(const TrainState& state) {
  const PolicyParams& p = state.params;
  const int64_t v = p.vocab_size;
  const int64_t e = p.embedding_dim;
  const int64_t f = p.feature_dim;
  const int64_t h = p.hidden_width;
  std::vector<BlobRef> blobs;
  auto add_group = [&](const std::string& prefix, const std::vector<double>& emb,
                       const std::vector<double>& w1, const std::vector<double>& b1,
                       const std::vector<double>& w2, const std::vector<double>& b2,
                       const std::vector<double>& w_out, const double& b_out) {
    blobs.push_back({prefix + "embedding", &emb, nullptr, {v, e}});
    blobs.push_back({prefix + "w1", &w1, nullptr, {h, f}});
    blobs.push_back({prefix + "b1", &b1, nullptr, {h}});
    blobs.push_back({prefix + "w2", &w2, nullptr, {h, h}});
    blobs.push_back({prefix + "b2", &b2, nullptr, {h}});
    blobs.push_back({prefix + "w_out", &w_out, nullptr, {h}});
    blobs.push_back({prefix + "b_out", nullptr, &b_out, {1}});
  };
  add_group("params.", p.embedding, p.w1, p.b1, p.w2, p.b2, p.w_out, p.b_out);
  add_group("adam_m.", state.opt.m.embedding, state.opt.m.w1, state.opt.m.b1,
            state.opt.m.w2, state.opt.m.b2, state.opt.m.w_out, state.opt.m.b_out);
  add_group("adam_v.", state.opt.v.embedding, state.opt.v.w1, state.opt.v.b1,
            state.opt.v.w2, state.opt.v.b2, state.opt.v.w_out, state.opt.v.b_out);
  return blobs;
}

void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little) {
    throw StorageError("checkpoint blobs are little-endian; big-endian hosts "
                       "are not supported");
  }
}

}  // namespace

void save_checkpoint(const TrainState& state, const TrainingConfig& config,
                     const std::filesystem::path& dir) {
  require_little_endian();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw StorageError("cannot create checkpoint directory " + dir.string());
  }

  const std::vector<BlobRef> blobs = blob_layout(state);
  ordered_json index = ordered_json::array();
  uint64_t offset = 0;
  for (const BlobRef& b : blobs) {
    const uint64_t count = b.vec ? b.vec->size() : 1;
    index.push_back(ordered_json{{"name", b.name},
                                 {"shape", b.shape},
                                 {"offset_bytes", offset},
                                 {"count", count}});
    offset += count * sizeof(float);
  }

  ordered_json manifest{
      {"format_version", kCheckpointFormatVersion},
      {"step", state.step},
      {"tokenizer_fingerprint", state.tokenizer_fingerprint},
      {"hidden_width", state.params.hidden_width},
      {"feature_config", codec::feature_config_json(state.feature_config)},
      {"training_config", codec::training_config_json(config)},
      {"rng_state", state.rng.serialize()},
      {"blobs", index},
  };

  {
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out || !(out << manifest.dump(2) << "\n")) {
      throw StorageError("cannot write " + (dir / "manifest.json").string());
    }
  }
  {
    std::ofstream out(dir / "weights.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write " + (dir / "weights.bin").string());
    std::vector<float> buf;
    for (const BlobRef& b : blobs) {
      if (b.vec) {
        buf.resize(b.vec->size());
        for (size_t i = 0; i < b.vec->size(); ++i) {
          buf[i] = static_cast<float>((*b.vec)[i]);
        }
      } else {
        buf.assign(1, static_cast<float>(*b.scalar));
      }
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out.flush()) {
      throw StorageError("cannot write " + (dir / "weights.bin").string());
    }
  }
}

TrainState load_checkpoint(const std::filesystem::path& dir,
                           const std::string& expected_tokenizer_fingerprint) {
  require_little_endian();
  std::ifstream manifest_in(dir / "manifest.json", std::ios::binary);
  if (!manifest_in) {
    throw StorageError("cannot read " + (dir / "manifest.json").string());
  }
  json manifest;
  try {
    manifest = json::parse(manifest_in);
  } catch (const json::exception& e) {
    throw IntegrityError("checkpoint manifest is not valid JSON: " +
                         std::string(e.what()));
  }

  const int version = manifest.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    throw ConfigError("checkpoint format_version " + std::to_string(version) +
                      ", this build reads version " +
                      std::to_string(kCheckpointFormatVersion));
  }
  const std::string fingerprint = manifest.at("tokenizer_fingerprint").get<std::string>();
  if (!expected_tokenizer_fingerprint.empty() &&
      fingerprint != expected_tokenizer_fingerprint) {
    throw ConfigError("checkpoint tokenizer fingerprint " + fingerprint +
                      " does not match the configured tokenizer " +
                      expected_tokenizer_fingerprint + "; refusing to load");
  }

  TrainState state;
  state.step = manifest.at("step").get<int64_t>();
  state.tokenizer_fingerprint = fingerprint;
  state.feature_config = codec::feature_config_from_json(
      manifest.at("feature_config"), "checkpoint feature_config");
  state.rng.deserialize(manifest.at("rng_state").get<std::string>());

  const int hidden_width = manifest.at("hidden_width").get<int>();
  PolicyParams& p = state.params;
  p.vocab_size = state.feature_config.vocab_size;
  p.embedding_dim = state.feature_config.embedding_dim;
  p.feature_dim = state.feature_config.feature_dim();
  p.hidden_width = hidden_width;
  const size_t f = static_cast<size_t>(p.feature_dim);
  const size_t h = static_cast<size_t>(hidden_width);
  const size_t emb = static_cast<size_t>(p.vocab_size) *
                     static_cast<size_t>(p.embedding_dim);
  p.embedding.resize(emb);
  p.w1.resize(h * f);
  p.b1.resize(h);
  p.w2.resize(h * h);
  p.b2.resize(h);
  p.w_out.resize(h);
  state.opt.init_like(p);

  std::vector<std::pair<std::vector<double>*, double*>> targets = {
      {&p.embedding, nullptr},           {&p.w1, nullptr},
      {&p.b1, nullptr},                  {&p.w2, nullptr},
      {&p.b2, nullptr},                  {&p.w_out, nullptr},
      {nullptr, &p.b_out},               {&state.opt.m.embedding, nullptr},
      {&state.opt.m.w1, nullptr},        {&state.opt.m.b1, nullptr},
      {&state.opt.m.w2, nullptr},        {&state.opt.m.b2, nullptr},
      {&state.opt.m.w_out, nullptr},     {nullptr, &state.opt.m.b_out},
      {&state.opt.v.embedding, nullptr}, {&state.opt.v.w1, nullptr},
      {&state.opt.v.b1, nullptr},        {&state.opt.v.w2, nullptr},
      {&state.opt.v.b2, nullptr},        {&state.opt.v.w_out, nullptr},
      {nullptr, &state.opt.v.b_out},
  };

  const json& index = manifest.at("blobs");
  if (!index.is_array() || index.size() != targets.size()) {
    throw IntegrityError("checkpoint blob index has " +
                         std::to_string(index.size()) + " entries, expected " +
                         std::to_string(targets.size()));
  }

  std::ifstream blob_in(dir / "weights.bin", std::ios::binary);
  if (!blob_in) throw StorageError("cannot read " + (dir / "weights.bin").string());
  blob_in.seekg(0, std::ios::end);
  const uint64_t file_size = static_cast<uint64_t>(blob_in.tellg());

  std::vector<float> buf;
  for (size_t i = 0; i < targets.size(); ++i) {
    const json& entry = index.at(i);
    const uint64_t offset = entry.at("offset_bytes").get<uint64_t>();
    const uint64_t count = entry.at("count").get<uint64_t>();
    const uint64_t expected =
        targets[i].first ? targets[i].first->size() : 1;
    if (count != expected) {
      throw IntegrityError("checkpoint blob " + std::to_string(i) + " (" +
                           entry.at("name").get<std::string>() + ") holds " +
                           std::to_string(count) + " values, expected " +
                           std::to_string(expected));
    }
    if (offset + count * sizeof(float) > file_size) {
      throw IntegrityError("checkpoint blob " + std::to_string(i) + " (" +
                           entry.at("name").get<std::string>() +
                           ") is truncated in weights.bin");
    }
    buf.resize(count);
    blob_in.seekg(static_cast<std::streamoff>(offset));
    blob_in.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(count * sizeof(float)));
    if (!blob_in) {
      throw IntegrityError("checkpoint blob " + std::to_string(i) +
                           " could not be read");
    }
    if (targets[i].first) {
      std::vector<double>& dst = *targets[i].first;
      for (size_t j = 0; j < count; ++j) dst[j] = static_cast<double>(buf[j]);
    } else {
      *targets[i].second = static_cast<double>(buf[0]);
    }
  }
  return state;
}

TrainingConfig checkpoint_training_config(const std::filesystem::path& dir) {
  std::ifstream manifest_in(dir / "manifest.json", std::ios::binary);
  if (!manifest_in) {
    throw StorageError("cannot read " + (dir / "manifest.json").string());
  }
  json manifest = json::parse(manifest_in);
  return codec::training_config_from_json(manifest.at("training_config"),
                                          "checkpoint training_config");
}

}  // namespace shear
