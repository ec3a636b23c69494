#pragma once

// Runtime configuration: one JSON document covering every tunable, with
// environment overrides for provider endpoints and credentials. Unknown keys
// are rejected so typos do not silently fall back to defaults.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "bessom/agents.hpp"
#include "bessom/error.hpp"
#include "bessom/pipeline.hpp"
#include "json.hpp"

namespace bessom {

struct LlmSettings {
  /// "mock" or "http".
  std::string provider = "mock";
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini";
  std::string api_key;
  double timeout_s = 60.0;
  int max_attempts = 3;
  int max_concurrency = 4;
};

struct EmbeddingSettings {
  /// "mock" or "http".
  std::string provider = "mock";
  std::string url;
  std::size_t dimension = 64;
  double timeout_s = 30.0;
  int max_attempts = 3;
  std::size_t batch_size = 32;
};

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "*";
  /// Append-only JSONL log of answered queries; empty disables it.
  std::string audit_log;
  std::string store_dir = "data/records";
  std::string index_dir = "data/index";
  std::size_t threads = 16;
};

struct Config {
  PipelineConfig pipeline{};
  AgentOptions agents{};
  LlmSettings llm{};
  EmbeddingSettings embedding{};
  ServiceSettings service{};
};

namespace detail {

/// Reads the keys of one JSON object and reports any it did not consume.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParseError("config: '" + path_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError("config: '" + path_ + "." + key + "' has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  ObjectReader child(const char* key) {
    seen_.insert(key);
    return ObjectReader(j_.at(key), path_ + "." + key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ParseError("config: unknown key '" + path_ + "." + item.key() + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline Config config_from_json(const nlohmann::json& j) {
  Config c;
  detail::ObjectReader root(j, "config");
  if (root.has("ingest")) {
    auto r = root.child("ingest");
    r.get("voltage_min_V", c.pipeline.ingest.voltage_min_V);
    r.get("voltage_max_V", c.pipeline.ingest.voltage_max_V);
    r.get("temperature_min_C", c.pipeline.ingest.temperature_min_C);
    r.get("temperature_max_C", c.pipeline.ingest.temperature_max_C);
    r.get("sync_tolerance_s", c.pipeline.ingest.sync_tolerance_s);
    r.get("idle_current_A", c.pipeline.segmentation.idle_current_A);
    r.get("idle_gap_s", c.pipeline.segmentation.idle_gap_s);
    r.finish();
  }
  if (root.has("selection")) {
    auto r = root.child("selection");
    r.get("min_duration_s", c.pipeline.selection.min_duration_s);
    r.get("min_current_A", c.pipeline.selection.min_current_A);
    r.get("max_rmse_A", c.pipeline.selection.max_rmse_A);
    r.get("trim_fraction", c.pipeline.selection.trim_fraction);
    r.get("signed_threshold", c.pipeline.selection.signed_threshold);
    r.finish();
  }
  if (root.has("voltage")) {
    auto r = root.child("voltage");
    r.get("threshold", c.pipeline.voltage.threshold);
    r.get("two_sided", c.pipeline.voltage.two_sided);
    r.get("max_rpca_rows", c.pipeline.voltage.max_rpca_rows);
    r.get("rpca_rho", c.pipeline.voltage.rpca.rho);
    r.get("rpca_tol", c.pipeline.voltage.rpca.tol);
    r.get("rpca_max_iter", c.pipeline.voltage.rpca.max_iter);
    r.finish();
  }
  if (root.has("health")) {
    auto r = root.child("health");
    auto& h = c.pipeline.health;
    r.get("q_nom_Ah", h.q_nom_Ah);
    r.get("lof_k", h.steady.k);
    r.get("lof_threshold", h.steady.lof_threshold);
    r.get("min_steady_s", h.steady.min_len_s);
    r.get("min_soc_change", h.min_soc_change);
    r.get("coulombic_efficiency", h.eta);
    r.get("sigma_soc", h.noise.sigma_x);
    r.get("sigma_charge_rel", h.noise.sigma_y_rel);
    r.get("sigma_charge_abs_Ah", h.noise.sigma_y_abs_Ah);
    r.get("search_lo_fraction", h.search.lo_fraction);
    r.get("search_hi_fraction", h.search.hi_fraction);
    r.get("search_tol_Ah", h.search.tol_Ah);
    r.finish();
  }
  if (root.has("records")) {
    auto r = root.child("records");
    r.get("match_overlap", c.pipeline.match_overlap);
    r.finish();
  }
  if (root.has("agents")) {
    auto r = root.child("agents");
    r.get("top_k", c.agents.top_k);
    r.get("include_original", c.agents.include_original);
    r.get("default_window_days", c.agents.default_window_days);
    r.get("deadline_s", c.agents.deadline_s);
    r.finish();
  }
  if (root.has("llm")) {
    auto r = root.child("llm");
    r.get("provider", c.llm.provider);
    r.get("base_url", c.llm.base_url);
    r.get("model", c.llm.model);
    r.get("timeout_s", c.llm.timeout_s);
    r.get("max_attempts", c.llm.max_attempts);
    r.get("max_concurrency", c.llm.max_concurrency);
    r.finish();
  }
  if (root.has("embedding")) {
    auto r = root.child("embedding");
    r.get("provider", c.embedding.provider);
    r.get("url", c.embedding.url);
    r.get("dimension", c.embedding.dimension);
    r.get("timeout_s", c.embedding.timeout_s);
    r.get("max_attempts", c.embedding.max_attempts);
    r.get("batch_size", c.embedding.batch_size);
    r.finish();
  }
  if (root.has("service")) {
    auto r = root.child("service");
    r.get("host", c.service.host);
    r.get("port", c.service.port);
    r.get("cors_origin", c.service.cors_origin);
    r.get("audit_log", c.service.audit_log);
    r.get("store_dir", c.service.store_dir);
    r.get("index_dir", c.service.index_dir);
    r.get("threads", c.service.threads);
    r.finish();
  }
  root.finish();

  auto one_of = [](const std::string& v, const char* what) {
    if (v != "mock" && v != "http") throw ValidationError(std::string("config: ") + what + " must be 'mock' or 'http'");
  };
  one_of(c.llm.provider, "llm.provider");
  one_of(c.embedding.provider, "embedding.provider");
  c.pipeline.selection.validate();
  if (c.agents.top_k == 0) throw ValidationError("config: agents.top_k must be at least 1");
  if (c.agents.default_window_days < 1) throw ValidationError("config: agents.default_window_days must be at least 1");
  if (c.llm.max_attempts < 1 || c.embedding.max_attempts < 1) throw ValidationError("config: max_attempts must be >= 1");
  if (c.service.port < 0 || c.service.port > 65535) throw ValidationError("config: service.port out of range");
  return c;
}

/// LLM_API_KEY, LLM_BASE_URL, LLM_MODEL and EMBED_BASE_URL override the file.
inline void apply_env(Config& c) {
  auto env = [](const char* name) -> const char* {
    const char* v = std::getenv(name);
    return v && *v ? v : nullptr;
  };
  if (const char* v = env("LLM_API_KEY")) c.llm.api_key = v;
  if (const char* v = env("LLM_BASE_URL")) c.llm.base_url = v;
  if (const char* v = env("LLM_MODEL")) c.llm.model = v;
  if (const char* v = env("EMBED_BASE_URL")) c.embedding.url = v;
}

/// Defaults when `path` is empty; environment overrides applied in both cases.
inline Config load_config(const std::filesystem::path& path) {
  Config c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("config " + path.string() + ": " + e.what());
    }
    c = config_from_json(j);
  }
  apply_env(c);
  return c;
}

}  // namespace bessom
