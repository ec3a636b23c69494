#pragma once

// JSON HTTP API over a loaded record store and knowledge index.
//
//   POST /api/query                {question}      -> answer with audit and timings
//   GET  /api/records?from&to                      -> record entries
//   GET  /api/knowledge/search?q&k (q repeatable)  -> retrieval hits with slice bodies
//   GET  /api/healthz                              -> store, index and provider status
//
// Errors are {"error": ..., "stage": ...} with a 4xx or 5xx status.

#include <fstream>
#include <mutex>
#include <string>

#include <spdlog/spdlog.h>

#include "bessom/agents.hpp"
#include "bessom/config.hpp"
#include "bessom/knowledge.hpp"
#include "bessom/records.hpp"
#include "httplib.h"
#include "json.hpp"

namespace bessom {

/// Shared read-only state; the referenced objects must outlive the service.
struct ServiceContext {
  const RecordStore& store;
  const KnowledgeIndex& index;
  EmbeddingProvider& embedder;
  LlmClient& llm;
  AgentOptions agents{};
  ServiceSettings settings{};
};

class Service {
 public:
  explicit Service(ServiceContext ctx) : ctx_(std::move(ctx)) {
    const std::size_t threads = std::max<std::size_t>(ctx_.settings.threads, 1);
    server_.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    if (!ctx_.settings.audit_log.empty()) {
      audit_.open(ctx_.settings.audit_log, std::ios::app);
      if (!audit_) throw Error("cannot open audit log " + ctx_.settings.audit_log);
    }
    install_routes();
  }

  /// Binds to the configured host; port 0 picks a free port. Returns the bound port.
  int bind() {
    const int port = ctx_.settings.port == 0 ? server_.bind_to_any_port(ctx_.settings.host)
                                             : (server_.bind_to_port(ctx_.settings.host, ctx_.settings.port)
                                                    ? ctx_.settings.port
                                                    : -1);
    if (port < 0) throw Error("cannot bind " + ctx_.settings.host + ":" + std::to_string(ctx_.settings.port));
    return port;
  }

  /// Serves until stop(); call bind() first.
  bool run() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& error, const std::string& stage) {
    nlohmann::ordered_json j;
    j["error"] = error;
    j["stage"] = stage;
    send_json(res, status, j);
  }

  void install_routes() {
    const std::string origin = ctx_.settings.cors_origin;
    server_.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
      if (!origin.empty()) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      }
    });
    server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        if (ep) std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send_error(res, 500, what, "server");
    });
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not found" : "request failed", "routing");
    });

    server_.Get("/api/healthz", [this](const httplib::Request&, httplib::Response& res) { healthz(res); });
    server_.Get("/api/records", [this](const httplib::Request& req, httplib::Response& res) { records(req, res); });
    server_.Get("/api/knowledge/search",
                [this](const httplib::Request& req, httplib::Response& res) { search(req, res); });
    server_.Post("/api/query", [this](const httplib::Request& req, httplib::Response& res) { query(req, res); });
  }

  void healthz(httplib::Response& res) {
    nlohmann::ordered_json j;
    j["status"] = "ok";
    j["records"] = ctx_.store.size();
    j["packs"] = ctx_.store.packs();
    const auto first = ctx_.store.earliest_date(), last = ctx_.store.latest_date();
    j["earliest_date"] = first ? nlohmann::ordered_json(first->iso()) : nlohmann::ordered_json(nullptr);
    j["latest_date"] = last ? nlohmann::ordered_json(last->iso()) : nlohmann::ordered_json(nullptr);
    j["knowledge_slices"] = ctx_.index.size();
    j["embedding"] = ctx_.embedder.fingerprint();
    j["embedding_matches_index"] = ctx_.embedder.fingerprint() == ctx_.index.fingerprint();
    j["llm_model"] = ctx_.llm.model();
    j["prompt_version"] = std::string(prompt_text::kVersion);
    send_json(res, 200, j);
  }

  void records(const httplib::Request& req, httplib::Response& res) {
    std::optional<Date> from = ctx_.store.earliest_date(), to = ctx_.store.latest_date();
    try {
      if (req.has_param("from")) from = Date::parse(req.get_param_value("from"));
      if (req.has_param("to")) to = Date::parse(req.get_param_value("to"));
    } catch (const ParseError& e) {
      return send_error(res, 400, e.what(), "records");
    }
    nlohmann::ordered_json j;
    j["from"] = from ? nlohmann::ordered_json(from->iso()) : nlohmann::ordered_json(nullptr);
    j["to"] = to ? nlohmann::ordered_json(to->iso()) : nlohmann::ordered_json(nullptr);
    j["packs"] = ctx_.store.packs();
    auto entries = nlohmann::ordered_json::array();
    if (from && to) {
      if (*to < *from) return send_error(res, 400, "inverted range", "records");
      for (const auto& e : ctx_.store.query_range(*from, *to)) entries.push_back(to_json(e));
    }
    j["entries"] = std::move(entries);
    send_json(res, 200, j);
  }

  void search(const httplib::Request& req, httplib::Response& res) {
    const std::size_t n = req.get_param_value_count("q");
    std::vector<std::string> queries;
    for (std::size_t i = 0; i < n; ++i) {
      auto q = req.get_param_value("q", i);
      if (!detail::is_blank(q)) queries.push_back(std::move(q));
    }
    if (queries.empty()) return send_error(res, 400, "missing query parameter q", "retrieval");
    std::size_t k = ctx_.agents.top_k;
    if (req.has_param("k")) {
      try {
        const long v = std::stol(req.get_param_value("k"));
        if (v < 1) throw std::invalid_argument("k");
        k = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        return send_error(res, 400, "k must be a positive integer", "retrieval");
      }
    }
    try {
      auto hits = nlohmann::ordered_json::array();
      for (const auto& h : retrieve_topk(queries, ctx_.index, ctx_.embedder, k)) {
        const auto* s = ctx_.index.find(h.slice_id);
        nlohmann::ordered_json hj;
        hj["slice_id"] = h.slice_id;
        hj["fused_score"] = h.fused_score;
        hj["best_query_index"] = h.best_query_index;
        hj["key"] = s->key;
        hj["body"] = s->body;
        hj["source"] = s->source;
        hits.push_back(std::move(hj));
      }
      nlohmann::ordered_json j;
      j["queries"] = queries;
      j["hits"] = std::move(hits);
      send_json(res, 200, j);
    } catch (const TransportError& e) {
      send_error(res, 502, e.what(), "retrieval");
    } catch (const Error& e) {
      send_error(res, 400, e.what(), "retrieval");
    }
  }

  void query(const httplib::Request& req, httplib::Response& res) {
    std::string question;
    try {
      const auto body = nlohmann::json::parse(req.body);
      question = body.at("question").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      return send_error(res, 400, "request body must be a JSON object with a string field 'question'", "request");
    }
    if (detail::is_blank(question)) return send_error(res, 400, "empty question", "request");
    IndexedKnowledge knowledge(ctx_.index, ctx_.embedder);
    FinalAnswer fa;
    try {
      fa = answer(question, AgentDeps{ctx_.llm, &ctx_.store, &knowledge, ctx_.agents});
    } catch (const TransportError& e) {
      return send_error(res, 502, e.what(), "router");
    } catch (const std::exception& e) {
      return send_error(res, 500, e.what(), "answer");
    }
    const auto j = to_json(fa, true);
    if (audit_.is_open()) {
      std::lock_guard lock(audit_mutex_);
      audit_ << j.dump() << "\n";
      audit_.flush();
    }
    send_json(res, 200, j);
  }

  ServiceContext ctx_;
  httplib::Server server_;
  std::mutex audit_mutex_;
  std::ofstream audit_;
};

}  // namespace bessom
