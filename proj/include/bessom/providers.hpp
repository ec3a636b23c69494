#pragma once

#include <memory>

#include "bessom/config.hpp"
#include "bessom/http_clients.hpp"
#include "bessom/knowledge.hpp"
#include "bessom/mock_llm.hpp"

namespace bessom {

inline std::unique_ptr<LlmClient> make_llm(const LlmSettings& s) {
  if (s.provider == "mock") return std::make_unique<MockLlm>();
  HttpLlmConfig cfg;
  cfg.base_url = s.base_url;
  cfg.model = s.model;
  cfg.api_key = s.api_key;
  cfg.retry = {s.timeout_s, s.max_attempts, 0.5};
  cfg.max_concurrency = s.max_concurrency;
  return std::make_unique<HttpLlm>(std::move(cfg));
}

inline std::unique_ptr<EmbeddingProvider> make_embedding(const EmbeddingSettings& s) {
  if (s.provider == "mock") return std::make_unique<MockEmbedding>(s.dimension);
  if (s.url.empty()) throw ValidationError("embedding.url (or EMBED_BASE_URL) is required for the http provider");
  return std::make_unique<HttpEmbedding>(HttpEmbeddingConfig{s.url, s.dimension, {s.timeout_s, s.max_attempts, 0.5}});
}

}  // namespace bessom
