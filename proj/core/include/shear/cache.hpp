#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "shear/backend.hpp"

namespace shear {

// Content-addressed, append-only store of generation results. Entries are
// JSON files named by the SHA-256 of their canonical key; writes go through
// a temp file + rename so readers never see a partial entry.
class ResponseCache {
 public:
  // Opens (creating if needed) the cache directory. Throws StorageError
  // when the directory cannot be created or is not writable.
  explicit ResponseCache(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  // Canonical key hash over everything that determines a generation.
  static std::string key_hash(const std::string& backend_id, const std::string& model,
                              const GenRequest& request);

  std::optional<std::string> find(const std::string& key_hash) const;

  void store(const std::string& key_hash, const std::string& backend_id,
             const std::string& model, const GenRequest& request,
             const std::string& text);

  struct Stats {
    uint64_t entries = 0;
    uint64_t bytes = 0;
  };
  Stats stats() const;

  // store() failures observed by cached_generate (which swallows them so
  // the generation is still returned).
  uint64_t write_failures() const { return write_failures_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex write_mutex_;
  uint64_t write_failures_ = 0;

  friend GenResult cached_generate(ResponseCache& cache, Backend& backend,
                                   const GenRequest& request);
};

// Cache-through generation: hit returns the stored text with
// from_cache=true; miss calls the backend, persists, and returns. A failed
// cache write is recorded but never loses the generation.
GenResult cached_generate(ResponseCache& cache, Backend& backend,
                          const GenRequest& request);

struct BatchResolution {
  std::string text;
  bool from_cache = false;
  bool ok = false;
  std::string error;  // BackendError message when !ok
};

// Resolves each request through the cache, dispatching the misses
// concurrently up to the backend's concurrency limit. Requests should be
// distinct; backend failures are captured per request, never thrown.
std::vector<BatchResolution> resolve_batch(ResponseCache& cache, Backend& backend,
                                           const std::vector<GenRequest>& requests);

}  // namespace shear
