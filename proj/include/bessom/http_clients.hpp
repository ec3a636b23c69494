#pragma once

// HTTP implementations of the chat-completion and embedding providers.
//
// Chat: OpenAI-compatible POST <base>/chat/completions with a Bearer key.
// Embeddings: POST <url> with a JSON array of strings, answered by a JSON
// array of float arrays in the same order.

#include <algorithm>
#include <chrono>
#include <regex>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "bessom/error.hpp"
#include "bessom/knowledge.hpp"
#include "bessom/llm.hpp"
#include "httplib.h"
#include "json.hpp"

namespace bessom {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path prefix without trailing slash
};

inline Endpoint parse_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ValidationError("invalid endpoint URL '" + url + "'");
  std::string path = m[2].matched ? m[2].str() : "";
  while (!path.empty() && path.back() == '/') path.pop_back();
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (url.rfind("https", 0) == 0) throw ValidationError("https endpoints need a build with OpenSSL");
#endif
  return {m[1].str(), path};
}

struct RetryPolicy {
  double timeout_s = 60.0;
  int max_attempts = 3;
  double backoff_s = 0.5;
};

namespace detail {

/// POSTs JSON, retrying on connection errors, 429 and 5xx. Other statuses fail at once.
inline std::string post_json(const Endpoint& ep, const std::string& path, const std::string& body,
                             const httplib::Headers& headers, const RetryPolicy& policy, std::string_view what) {
  std::string last_error;
  int attempt = 0;
  for (attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    httplib::Client cli(ep.origin);
    const auto secs = static_cast<time_t>(policy.timeout_s);
    const auto usecs = static_cast<time_t>((policy.timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    auto res = cli.Post(path, headers, body, "application/json");
    if (res && res->status >= 200 && res->status < 300) return res->body;
    if (!res) {
      last_error = std::string(what) + ": " + httplib::to_string(res.error());
    } else {
      last_error = std::string(what) + ": HTTP " + std::to_string(res->status);
      if (res->status != 429 && res->status < 500) throw TransportError(last_error, attempt);
    }
    spdlog::warn("{} (attempt {}/{})", last_error, attempt, policy.max_attempts);
    if (attempt < policy.max_attempts) {
      std::this_thread::sleep_for(std::chrono::duration<double>(policy.backoff_s * (1 << (attempt - 1))));
    }
  }
  throw TransportError(last_error, policy.max_attempts);
}

}  // namespace detail

struct HttpLlmConfig {
  std::string base_url;
  std::string model;
  std::string api_key;
  RetryPolicy retry{};
  std::ptrdiff_t max_concurrency = 4;
};

class HttpLlm : public LlmClient {
 public:
  static constexpr std::ptrdiff_t kMaxConcurrency = 64;

  explicit HttpLlm(HttpLlmConfig cfg)
      : cfg_(std::move(cfg)),
        endpoint_(parse_endpoint(cfg_.base_url)),
        slots_(std::clamp<std::ptrdiff_t>(cfg_.max_concurrency, 1, kMaxConcurrency)) {
    if (cfg_.model.empty()) throw ValidationError("LLM model name is empty");
  }

  std::string model() const override { return cfg_.model; }

  std::string complete(const ChatRequest& request) override {
    nlohmann::json body;
    body["model"] = cfg_.model;
    body["temperature"] = request.temperature;
    body["messages"] = nlohmann::json::array({{{"role", "system"}, {"content", request.system}},
                                              {{"role", "user"}, {"content", request.user}}});
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    slots_.acquire();
    std::string raw;
    try {
      raw = detail::post_json(endpoint_, endpoint_.path + "/chat/completions", body.dump(), headers, cfg_.retry,
                              "LLM " + std::string(to_string(request.stage)));
    } catch (...) {
      slots_.release();
      throw;
    }
    slots_.release();
    try {
      const auto j = nlohmann::json::parse(raw);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("LLM reply has no message content: ") + e.what(), 1);
    }
  }

 private:
  HttpLlmConfig cfg_;
  Endpoint endpoint_;
  std::counting_semaphore<kMaxConcurrency> slots_;
};

struct HttpEmbeddingConfig {
  std::string url;
  std::size_t dimension = 768;
  RetryPolicy retry{30.0, 3, 0.5};
};

class HttpEmbedding : public EmbeddingProvider {
 public:
  explicit HttpEmbedding(HttpEmbeddingConfig cfg) : cfg_(std::move(cfg)), endpoint_(parse_endpoint(cfg_.url)) {
    if (cfg_.dimension == 0) throw ValidationError("embedding dimension must be positive");
  }

  std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) override {
    const std::string raw =
        detail::post_json(endpoint_, endpoint_.path.empty() ? "/" : endpoint_.path, nlohmann::json(texts).dump(), {},
                          cfg_.retry, "embedding");
    try {
      return nlohmann::json::parse(raw).get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("embedding reply is not a list of float arrays: ") + e.what());
    }
  }

  std::size_t dimension() const override { return cfg_.dimension; }
  std::string fingerprint() const override { return "http:" + cfg_.url + "/d" + std::to_string(cfg_.dimension); }

 private:
  HttpEmbeddingConfig cfg_;
  Endpoint endpoint_;
};

}  // namespace bessom
