#pragma once

// Chat-completion gateway: deterministic decoding defaults, content-addressed
// response cache, bounded retries, an OpenAI-compatible HTTP backend and an
// offline mock backend keyed by request digest.

#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "gema/error.hpp"

namespace gema {

struct DecodingConfig {
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 8192;
  std::string model_name = "gpt-4o";

  friend bool operator==(const DecodingConfig&, const DecodingConfig&) = default;
};

inline void validate(const DecodingConfig& d) {
  if (!(d.temperature >= 0.0)) throw InvalidArgument("temperature must be >= 0");
  if (!(d.top_p > 0.0 && d.top_p <= 1.0)) throw InvalidArgument("top_p must be in (0,1]");
  if (d.max_tokens <= 0) throw InvalidArgument("max_tokens must be positive");
}

struct PromptRequest {
  std::string system_prompt;
  std::string user_prompt;
  DecodingConfig decoding;

  friend bool operator==(const PromptRequest&, const PromptRequest&) = default;
};

struct CompletionResult {
  std::string text;
  std::string backend_id;
  bool cache_hit = false;
  std::int64_t latency_ms = 0;
  bool truncated = false;  // backend stopped at the token budget
};

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

// Canonical serialization: sorted keys, shortest round-trip doubles.
inline std::string canonical_request(const PromptRequest& r) {
  nlohmann::json j = {
      {"v", 1},
      {"model", r.decoding.model_name},
      {"system", r.system_prompt},
      {"user", r.user_prompt},
      {"temperature", r.decoding.temperature},
      {"top_p", r.decoding.top_p},
      {"max_tokens", r.decoding.max_tokens},
  };
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline std::string cache_key(const PromptRequest& r) {
  return sha256_hex(canonical_request(r));
}

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes via a temporary file and rename so readers never see partial content.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  static std::atomic<unsigned> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(counter.fetch_add(1)) + "." +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

struct CachedCompletion {
  std::string request_digest;
  std::string completion_text;
  std::string model_name;
  std::string created_at;
  bool truncated = false;
};

// One JSON document per key: {request_digest, completion_text, model_name,
// created_at[, truncated]}.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& directory() const { return dir_; }
  std::filesystem::path path_for(const std::string& key) const {
    return dir_ / (key + ".json");
  }

  std::optional<CachedCompletion> load(const std::string& key) const {
    auto path = path_for(key);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
      auto j = nlohmann::json::parse(read_file(path));
      CachedCompletion c;
      c.request_digest = j.at("request_digest").get<std::string>();
      c.completion_text = j.at("completion_text").get<std::string>();
      c.model_name = j.value("model_name", std::string());
      c.created_at = j.value("created_at", std::string());
      c.truncated = j.value("truncated", false);
      if (c.request_digest != key) return std::nullopt;
      return c;
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;  // corrupt entry behaves as a miss
    } catch (const IoError&) {
      return std::nullopt;
    }
  }

  // Returns false when an entry for the key already exists (nothing written).
  bool store(const std::string& key, const std::string& text,
             const std::string& model_name, bool truncated = false) {
    std::lock_guard lock(mutex_);
    auto path = path_for(key);
    std::error_code ec;
    if (std::filesystem::exists(path, ec)) return false;
    nlohmann::json j = {{"request_digest", key},
                        {"completion_text", text},
                        {"model_name", model_name},
                        {"created_at", utc_timestamp()}};
    if (truncated) j["truncated"] = true;
    write_file_atomic(path, j.dump(2, ' ', false,
                                   nlohmann::json::error_handler_t::replace) + "\n");
    ++writes_;
    return true;
  }

  std::size_t writes() const {
    std::lock_guard lock(mutex_);
    return writes_;
  }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::size_t writes_ = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionResult send(const PromptRequest& request) = 0;
  virtual std::string id() const = 0;
};

// Resolves requests to canned completions by cache_key. A missing fixture
// is an error unless a fallback is configured.
class MockBackend : public Backend {
 public:
  struct Fixture {
    std::string text;
    bool truncated = false;
  };

  MockBackend() = default;

  // Loads every <digest>.json in `dir` ({"completion_text", "truncated"?});
  // `_fallback.json` becomes the fallback response.
  static MockBackend from_directory(const std::filesystem::path& dir) {
    MockBackend mock;
    if (!std::filesystem::is_directory(dir))
      throw IoError("mock fixture directory not found: " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
      auto j = nlohmann::json::parse(read_file(entry.path()));
      Fixture f{j.at("completion_text").get<std::string>(), j.value("truncated", false)};
      auto stem = entry.path().stem().string();
      if (stem == "_fallback")
        mock.fallback_ = std::move(f);
      else
        mock.fixtures_[stem] = std::move(f);
    }
    return mock;
  }

  static void write_fixture(const std::filesystem::path& dir, const PromptRequest& request,
                            const std::string& text, bool truncated = false) {
    std::filesystem::create_directories(dir);
    nlohmann::json j = {{"completion_text", text}};
    if (truncated) j["truncated"] = true;
    write_file_atomic(dir / (cache_key(request) + ".json"),
                      j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
  }

  MockBackend(MockBackend&& o) noexcept
      : fixtures_(std::move(o.fixtures_)), fallback_(std::move(o.fallback_)),
        calls_(o.calls_.load()) {}

  void add(const PromptRequest& request, std::string text, bool truncated = false) {
    fixtures_[cache_key(request)] = Fixture{std::move(text), truncated};
  }
  void add_digest(const std::string& digest, std::string text, bool truncated = false) {
    fixtures_[digest] = Fixture{std::move(text), truncated};
  }
  void set_fallback(std::string text) { fallback_ = Fixture{std::move(text), false}; }

  CompletionResult send(const PromptRequest& request) override {
    calls_.fetch_add(1);
    auto key = cache_key(request);
    auto it = fixtures_.find(key);
    const Fixture* f = nullptr;
    if (it != fixtures_.end())
      f = &it->second;
    else if (fallback_)
      f = &*fallback_;
    else
      throw FixtureMissingError("no mock fixture for request digest " + key);
    CompletionResult r;
    r.text = f->text;
    r.truncated = f->truncated;
    r.backend_id = id();
    return r;
  }

  std::string id() const override { return "mock"; }
  std::size_t call_count() const { return calls_.load(); }
  void reset_call_count() { calls_.store(0); }
  std::size_t fixture_count() const { return fixtures_.size(); }

 private:
  std::map<std::string, Fixture> fixtures_;
  std::optional<Fixture> fallback_;
  std::atomic<std::size_t> calls_{0};
};

struct HttpBackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::chrono::seconds timeout{300};

  // GEMA_API_BASE and GEMA_API_KEY.
  static HttpBackendConfig from_env() {
    HttpBackendConfig c;
    if (const char* base = std::getenv("GEMA_API_BASE"); base && *base) c.base_url = base;
    if (const char* key = std::getenv("GEMA_API_KEY"); key) c.api_key = key;
    return c;
  }
};

inline nlohmann::json chat_request_body(const PromptRequest& r) {
  nlohmann::json messages = nlohmann::json::array();
  if (!r.system_prompt.empty())
    messages.push_back({{"role", "system"}, {"content", r.system_prompt}});
  messages.push_back({{"role", "user"}, {"content", r.user_prompt}});
  return {{"model", r.decoding.model_name},
          {"messages", messages},
          {"temperature", r.decoding.temperature},
          {"top_p", r.decoding.top_p},
          {"max_tokens", r.decoding.max_tokens}};
}

// Extracts the first choice's assistant message.
inline CompletionResult parse_chat_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponseError(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() ||
      j["choices"].empty())
    throw MalformedResponseError("response has no choices");
  const auto& choice = j["choices"][0];
  if (!choice.is_object() || !choice.contains("message") ||
      !choice["message"].is_object() || !choice["message"].contains("content") ||
      !choice["message"]["content"].is_string())
    throw MalformedResponseError("first choice has no message content");
  CompletionResult r;
  r.text = choice["message"]["content"].get<std::string>();
  r.truncated = choice.value("finish_reason", nlohmann::json()).is_string() &&
                choice["finish_reason"].get<std::string>() == "length";
  return r;
}

// POST {base_url}/chat/completions with bearer auth.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    auto scheme_end = config_.base_url.find("://");
    auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = config_.base_url.find('/', host_start);
    if (path_start == std::string::npos) {
      origin_ = config_.base_url;
    } else {
      origin_ = config_.base_url.substr(0, path_start);
      path_prefix_ = config_.base_url.substr(path_start);
    }
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }

  CompletionResult send(const PromptRequest& request) override {
    httplib::Client client(origin_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    auto body = chat_request_body(request).dump(-1, ' ', false,
                                                nlohmann::json::error_handler_t::replace);
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body,
                           "application/json");
    if (!res) throw TransportError("transport failure: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw ApiError(res->status, res->body.substr(0, 200));
    auto result = parse_chat_response(res->body);
    result.backend_id = id();
    return result;
  }

  std::string id() const override { return "http:" + origin_ + path_prefix_; }

 private:
  HttpBackendConfig config_;
  std::string origin_;
  std::string path_prefix_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

// Front door for every LLM call: cache lookup, bounded concurrency, retries.
class Gateway {
 public:
  explicit Gateway(Backend& backend, std::optional<std::filesystem::path> cache_dir = {},
                   RetryPolicy retry = {}, int parallelism = 1)
      : backend_(backend), retry_(std::move(retry)), parallelism_(parallelism < 1 ? 1 : parallelism) {
    if (cache_dir) cache_.emplace(*cache_dir);
  }

  int parallelism() const { return parallelism_; }
  Backend& backend() { return backend_; }
  ResponseCache* cache() { return cache_ ? &*cache_ : nullptr; }

  CompletionResult complete(const PromptRequest& request) {
    if (request.user_prompt.empty()) throw InvalidArgument("user_prompt must be non-empty");
    validate(request.decoding);
    auto started = std::chrono::steady_clock::now();
    std::string key;
    if (cache_) {
      key = cache_key(request);
      if (auto hit = cache_->load(key)) {
        CompletionResult r;
        r.text = std::move(hit->completion_text);
        r.truncated = hit->truncated;
        r.backend_id = backend_.id();
        r.cache_hit = true;
        return r;
      }
    }
    Slot slot(*this);
    CompletionResult result = send_with_retries(request);
    result.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - started)
                            .count();
    if (cache_) cache_->store(key, result.text, request.decoding.model_name, result.truncated);
    return result;
  }

 private:
  class Slot {
   public:
    explicit Slot(Gateway& g) : g_(g) {
      std::unique_lock lock(g_.slot_mutex_);
      g_.slot_cv_.wait(lock, [&] { return g_.in_flight_ < g_.parallelism_; });
      ++g_.in_flight_;
    }
    ~Slot() {
      {
        std::lock_guard lock(g_.slot_mutex_);
        --g_.in_flight_;
      }
      g_.slot_cv_.notify_one();
    }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    Gateway& g_;
  };

  CompletionResult send_with_retries(const PromptRequest& request) {
    auto backoff = retry_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
      try {
        return backend_.send(request);
      } catch (const TransportError& e) {
        if (attempt >= retry_.max_attempts) throw TransportError(e.what(), attempt);
      } catch (const ApiError& e) {
        if (!e.retryable() || attempt >= retry_.max_attempts)
          throw ApiError(e.status(), e.body_excerpt(), attempt);
      }
      retry_.sleep(backoff);
      backoff *= 2;
    }
  }

  Backend& backend_;
  std::optional<ResponseCache> cache_;
  RetryPolicy retry_;
  int parallelism_;
  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;
};

inline CompletionResult complete(const PromptRequest& request, Gateway& gateway) {
  return gateway.complete(request);
}

}  // namespace gema
