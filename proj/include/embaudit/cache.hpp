#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "embaudit/types.hpp"

namespace embaudit {

/// Lookup key of one cached vector: content hash plus the model and
/// calibration variant that produced it.
struct CacheKey {
  std::string hash;
  std::string model_id;
  std::string calibration_id;  // "none" for uncalibrated embeddings

  std::string composite() const { return hash + '\x1f' + model_id + '\x1f' + calibration_id; }
};

/// Append-only JSONL store of embedding vectors
/// ({"hash","model_id","calibration_id","vector"} per line). Writes are
/// serialized; reads take a shared lock. The file is the durable record:
/// reopening the same path restores every entry.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path path);

  std::optional<Vector> find(const CacheKey& key) const;
  void put(const CacheKey& key, const Vector& vector);
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

  /// Content-addressing hash of a text (128-bit FNV-1a pair, hex).
  static std::string content_hash(std::string_view text);

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Vector> entries_;
};

/// Where fetch_embeddings gets vectors from: an HTTP endpoint plus cache,
/// or cache only (empty url). The endpoint contract is
/// POST {url}/embed with {"model_id": str, "texts": [str]} returning
/// {"vectors": [[float]]} in input order.
struct ProviderDescriptor {
  std::string url;  // e.g. "http://localhost:8080"; empty = cache only
  int batch_size = 16;
  std::string model_id = "external";
  std::filesystem::path cache_path;
};

/// Embeddings for `texts` in order, served from the cache where possible;
/// misses are fetched in batches and persisted. All vectors in one call
/// must agree on dimension.
std::vector<Vector> fetch_embeddings(const ProviderDescriptor& provider,
                                     std::span<const std::string> texts);

}  // namespace embaudit
