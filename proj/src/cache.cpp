#include "embaudit/cache.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace embaudit {

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;  // fresh cache
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
      CacheKey key{record.at("hash").get<std::string>(),
                   record.at("model_id").get<std::string>(),
                   record.at("calibration_id").get<std::string>()};
      const auto& values = record.at("vector");
      Vector vector(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) vector(i) = values[i].get<double>();
      entries_[key.composite()] = std::move(vector);
    } catch (const nlohmann::json::exception& e) {
      throw Error("embedding cache '" + path_.string() + "' corrupt at line " +
                  std::to_string(line_number) + ": " + e.what());
    }
  }
}

std::optional<Vector> EmbeddingCache::find(const CacheKey& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key.composite());
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const CacheKey& key, const Vector& vector) {
  std::unique_lock lock(mutex_);
  auto [it, inserted] = entries_.try_emplace(key.composite(), vector);
  if (!inserted) return;  // already persisted

  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error("embedding cache: cannot append to '" + path_.string() + "'");
  nlohmann::json record{{"hash", key.hash},
                        {"model_id", key.model_id},
                        {"calibration_id", key.calibration_id}};
  auto values = nlohmann::json::array();
  for (int i = 0; i < vector.size(); ++i) values.push_back(vector(i));
  record["vector"] = std::move(values);
  out << record.dump() << '\n';
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::string EmbeddingCache::content_hash(std::string_view text) {
  // Two FNV-1a streams with distinct offsets give a 128-bit key.
  const std::uint64_t lo = hash_bytes(text);
  const std::uint64_t hi = hash_bytes(text, 0x6c62272e07bb0142ULL);
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << hi << std::setw(16) << lo;
  return os.str();
}

std::vector<Vector> fetch_embeddings(const ProviderDescriptor& provider,
                                     std::span<const std::string> texts) {
  if (provider.cache_path.empty())
    throw Error("fetch_embeddings: provider has no cache path");
  if (provider.batch_size < 1) throw Error("fetch_embeddings: batch_size must be >= 1");

  EmbeddingCache cache(provider.cache_path);
  std::vector<Vector> results(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const CacheKey key{EmbeddingCache::content_hash(texts[i]), provider.model_id, "none"};
    if (auto hit = cache.find(key)) {
      results[i] = std::move(*hit);
    } else {
      missing.push_back(i);
    }
  }

  if (!missing.empty()) {
    if (provider.url.empty())
      throw Error("fetch_embeddings: " + std::to_string(missing.size()) +
                  " texts missing from cache-only provider");
    httplib::Client client(provider.url);
    client.set_read_timeout(60, 0);
    for (std::size_t offset = 0; offset < missing.size();
         offset += static_cast<std::size_t>(provider.batch_size)) {
      const std::size_t end =
          std::min(missing.size(), offset + static_cast<std::size_t>(provider.batch_size));
      nlohmann::json request{{"model_id", provider.model_id}};
      auto batch_texts = nlohmann::json::array();
      for (std::size_t j = offset; j < end; ++j) batch_texts.push_back(texts[missing[j]]);
      request["texts"] = std::move(batch_texts);

      auto response = client.Post("/embed", request.dump(), "application/json");
      if (!response)
        throw Error("fetch_embeddings: transport failure contacting " + provider.url);
      if (response->status != 200)
        throw Error("fetch_embeddings: provider returned status " +
                    std::to_string(response->status));
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(response->body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("fetch_embeddings: malformed provider response: ") +
                    e.what());
      }
      const auto& vectors = body.at("vectors");
      if (vectors.size() != end - offset)
        throw Error("fetch_embeddings: provider returned " +
                    std::to_string(vectors.size()) + " vectors for a batch of " +
                    std::to_string(end - offset));
      for (std::size_t j = offset; j < end; ++j) {
        const auto& values = vectors[j - offset];
        Vector vector(values.size());
        for (std::size_t k = 0; k < values.size(); ++k) vector(k) = values[k].get<double>();
        results[missing[j]] = std::move(vector);
      }
    }
  }

  // Uniform dimension across the whole call.
  const Eigen::Index dim = results.empty() ? 0 : results.front().size();
  for (const auto& vector : results)
    if (vector.size() != dim)
      throw Error("fetch_embeddings: dimension mismatch across batch (" +
                  std::to_string(vector.size()) + " vs " + std::to_string(dim) + ")");

  // Persist misses after validation.
  for (std::size_t i : missing) {
    const CacheKey key{EmbeddingCache::content_hash(texts[i]), provider.model_id, "none"};
    cache.put(key, results[i]);
  }
  return results;
}

}  // namespace embaudit
