#include <doctest.h>

#include "embaudit/cache.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

using namespace embaudit;

namespace {

std::filesystem::path temp_cache(const std::string& name) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove(path);
  return path;
}

}  // namespace

TEST_CASE("content hash is stable and input-sensitive") {
  const auto a = EmbeddingCache::content_hash("hello world");
  CHECK(a == EmbeddingCache::content_hash("hello world"));
  CHECK(a != EmbeddingCache::content_hash("hello worlds"));
  CHECK(a.size() == 32);
}

TEST_CASE("cache persists entries across instances") {
  const auto path = temp_cache("embaudit_cache_test.jsonl");
  Vector v(3);
  v << 1.5, -2.0, 0.25;
  const CacheKey key{"abc", "model", "none"};
  {
    EmbeddingCache cache(path);
    CHECK(!cache.find(key).has_value());
    cache.put(key, v);
    CHECK(cache.size() == 1);
    auto hit = cache.find(key);
    REQUIRE(hit.has_value());
    CHECK((*hit - v).norm() == 0.0);
  }
  {
    EmbeddingCache reloaded(path);
    CHECK(reloaded.size() == 1);
    auto hit = reloaded.find(key);
    REQUIRE(hit.has_value());
    CHECK((*hit - v).norm() == 0.0);
    // Distinct calibration id is a distinct entry.
    CHECK(!reloaded.find({"abc", "model", "B2-L1..1-uniform"}).has_value());
  }
  std::filesystem::remove(path);
}

TEST_CASE("corrupt cache lines are an error") {
  const auto path = temp_cache("embaudit_cache_corrupt.jsonl");
  {
    std::ofstream out(path);
    out << "{\"hash\":\"x\",\"model_id\":\"m\",\"calibration_id\":\"none\",\"vector\":[1.0]}\n";
    out << "{broken\n";
  }
  CHECK_THROWS_AS(EmbeddingCache{path}, Error);
  std::filesystem::remove(path);
}

TEST_CASE("fetch_embeddings round-trips through endpoint and cache") {
  std::atomic<int> requests{0};
  httplib::Server server;
  server.Post("/embed", [&](const httplib::Request& request, httplib::Response& response) {
    ++requests;
    const auto body = nlohmann::json::parse(request.body);
    auto vectors = nlohmann::json::array();
    for (const auto& text : body.at("texts")) {
      const auto value = static_cast<double>(text.get<std::string>().size());
      vectors.push_back({value, value * 2.0, value * 3.0});
    }
    response.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const auto path = temp_cache("embaudit_fetch_test.jsonl");
  ProviderDescriptor provider;
  provider.url = "http://127.0.0.1:" + std::to_string(port);
  provider.batch_size = 2;
  provider.model_id = "toy";
  provider.cache_path = path;

  const std::vector<std::string> texts{"one", "twotwo", "three33", "four", "five5"};
  const auto vectors = fetch_embeddings(provider, texts);
  REQUIRE(vectors.size() == texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i)
    CHECK(vectors[i](0) == doctest::Approx(static_cast<double>(texts[i].size())));
  const int first_round = requests.load();
  CHECK(first_round == 3);  // 5 texts at batch size 2

  // Second call is served from the cache: no new requests.
  const auto cached = fetch_embeddings(provider, texts);
  CHECK(requests.load() == first_round);
  for (std::size_t i = 0; i < texts.size(); ++i)
    CHECK((cached[i] - vectors[i]).norm() == 0.0);

  // Cache-only provider resolves known texts and rejects unknown ones.
  ProviderDescriptor offline = provider;
  offline.url.clear();
  CHECK(fetch_embeddings(offline, texts).size() == texts.size());
  const std::vector<std::string> unknown{"never-seen"};
  CHECK_THROWS_AS(fetch_embeddings(offline, unknown), Error);

  server.stop();
  server_thread.join();
  std::filesystem::remove(path);
}

TEST_CASE("fetch_embeddings rejects dimension mismatches") {
  httplib::Server server;
  std::atomic<int> calls{0};
  server.Post("/embed", [&](const httplib::Request& request, httplib::Response& response) {
    const auto body = nlohmann::json::parse(request.body);
    auto vectors = nlohmann::json::array();
    for (const auto& text : body.at("texts")) {
      (void)text;
      if (calls++ == 0) {
        vectors.push_back({1.0, 2.0});
      } else {
        vectors.push_back({1.0, 2.0, 3.0});
      }
    }
    response.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const auto path = temp_cache("embaudit_fetch_dim.jsonl");
  ProviderDescriptor provider;
  provider.url = "http://127.0.0.1:" + std::to_string(port);
  provider.batch_size = 1;
  provider.cache_path = path;
  const std::vector<std::string> texts{"a", "b"};
  CHECK_THROWS_AS(fetch_embeddings(provider, texts), Error);

  server.stop();
  server_thread.join();
  std::filesystem::remove(path);
}

TEST_CASE("transport failures surface as errors") {
  const auto path = temp_cache("embaudit_fetch_down.jsonl");
  ProviderDescriptor provider;
  provider.url = "http://127.0.0.1:1";  // nothing listens here
  provider.cache_path = path;
  const std::vector<std::string> texts{"a"};
  CHECK_THROWS_AS(fetch_embeddings(provider, texts), Error);
  std::filesystem::remove(path);
}
