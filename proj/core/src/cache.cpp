#include "shear/cache.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>
#include <thread>

#include <json.hpp>

#include "shear/errors.hpp"
#include "shear/hash.hpp"

namespace shear {

namespace {

using nlohmann::json;

std::string canonical_temperature(double t) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", t);
  return buf;
}

std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec || !std::filesystem::is_directory(dir_)) {
    throw StorageError("cannot open cache directory " + dir_.string() +
                       (ec ? ": " + ec.message() : ""));
  }
}

std::string ResponseCache::key_hash(const std::string& backend_id,
                                    const std::string& model,
                                    const GenRequest& request) {
  // nlohmann::json orders keys lexicographically, making dump() canonical.
  json key{
      {"backend_id", backend_id},
      {"model", model},
      {"prompt", request.prompt_text},
      {"max_new_tokens", request.max_new_tokens},
      {"temperature", canonical_temperature(request.temperature)},
      {"stop", request.stop},
  };
  return sha256_hex(key.dump());
}

std::optional<std::string> ResponseCache::find(const std::string& key_hash) const {
  std::ifstream in(dir_ / key_hash, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    json entry = json::parse(buf.str());
    return entry.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw IntegrityError("cache entry " + key_hash + " is corrupt: " + e.what());
  }
}

void ResponseCache::store(const std::string& key_hash, const std::string& backend_id,
                          const std::string& model, const GenRequest& request,
                          const std::string& text) {
  json entry{
      {"backend_id", backend_id},
      {"model", model},
      {"prompt", request.prompt_text},
      {"max_new_tokens", request.max_new_tokens},
      {"temperature", canonical_temperature(request.temperature)},
      {"stop", request.stop},
      {"text", text},
      {"created_at", iso8601_utc_now()},
  };
  const std::string payload = entry.dump(2);

  std::lock_guard<std::mutex> lock(write_mutex_);
  const std::filesystem::path final_path = dir_ / key_hash;
  const std::filesystem::path tmp_path = dir_ / (key_hash + ".tmp");
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << payload) || !out.flush()) {
      std::error_code ec;
      std::filesystem::remove(tmp_path, ec);
      throw StorageError("cannot write cache entry " + tmp_path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp_path, final_path, ec);
  if (ec) {
    std::filesystem::remove(tmp_path, ec);
    throw StorageError("cannot finalize cache entry " + final_path.string());
  }
}

ResponseCache::Stats ResponseCache::stats() const {
  Stats s;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() == ".tmp") continue;
    ++s.entries;
    s.bytes += entry.file_size();
  }
  return s;
}

GenResult cached_generate(ResponseCache& cache, Backend& backend,
                          const GenRequest& request) {
  const std::string key =
      ResponseCache::key_hash(backend.id(), backend.descriptor().model, request);
  if (std::optional<std::string> hit = cache.find(key)) {
    GenResult result;
    result.text = std::move(*hit);
    result.backend_id = backend.id();
    result.from_cache = true;
    return result;
  }
  GenResult result = backend.generate(request);
  try {
    cache.store(key, backend.id(), backend.descriptor().model, request, result.text);
  } catch (const StorageError&) {
    ++cache.write_failures_;  // generation still returned
  }
  return result;
}

std::vector<BatchResolution> resolve_batch(ResponseCache& cache, Backend& backend,
                                           const std::vector<GenRequest>& requests) {
  std::vector<BatchResolution> out(requests.size());
  std::vector<size_t> misses;
  for (size_t i = 0; i < requests.size(); ++i) {
    const std::string key = ResponseCache::key_hash(
        backend.id(), backend.descriptor().model, requests[i]);
    if (std::optional<std::string> hit = cache.find(key)) {
      out[i].text = std::move(*hit);
      out[i].from_cache = true;
      out[i].ok = true;
    } else {
      misses.push_back(i);
    }
  }
  auto resolve_miss = [&](size_t i) {
    try {
      GenResult r = cached_generate(cache, backend, requests[i]);
      out[i].text = std::move(r.text);
      out[i].from_cache = r.from_cache;
      out[i].ok = true;
    } catch (const BackendError& e) {
      out[i].error = e.what();
    }
  };
  const size_t workers = std::min<size_t>(
      misses.size(), static_cast<size_t>(backend.descriptor().concurrency_limit));
  if (workers > 1) {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < misses.size(); i = next.fetch_add(1)) {
          resolve_miss(misses[i]);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  } else {
    for (size_t i : misses) resolve_miss(i);
  }
  return out;
}

}  // namespace shear
