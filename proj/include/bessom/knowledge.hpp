#pragma once

// Knowledge slices, key embeddings and multi-query max-fusion retrieval.
//
// A slice is a short Markdown section: the heading is its one-sentence key and
// the paragraphs below it are the body. Only keys are embedded. A query set is
// scored against every key and each slice keeps its best cosine similarity over
// the queries; the top k slices by that fused score are returned.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <spdlog/spdlog.h>

#include "bessom/error.hpp"
#include "bessom/llm.hpp"
#include "bessom/prompt_texts.hpp"
#include "json.hpp"

namespace bessom {

struct KnowledgeSlice {
  std::string id;
  std::string key;
  std::string body;
  std::string source;

  bool operator==(const KnowledgeSlice&) const = default;
};

struct SliceDiagnostic {
  std::string source;
  std::size_t line = 0;
  bool warning_only = false;
  std::string message;
};

struct ParsedSlices {
  std::vector<KnowledgeSlice> slices;
  std::vector<SliceDiagnostic> diagnostics;
};

inline constexpr std::size_t kSliceMinWords = 40;
inline constexpr std::size_t kSliceMaxWords = 200;

/// Splits Markdown into slices at `#` headings. Slice ids are `<source>#NNN`
/// numbered by heading position, so skipping a slice does not renumber the rest.
inline ParsedSlices parse_slices(std::string_view markdown, std::string_view source) {
  ParsedSlices out;
  struct Pending {
    std::string key;
    std::size_t line = 0;
    std::vector<std::string> paragraphs;
    std::string current;
  };
  std::optional<Pending> pending;
  std::size_t heading_count = 0;
  bool preamble_reported = false;

  auto flush_paragraph = [](Pending& p) {
    if (!p.current.empty()) p.paragraphs.push_back(std::move(p.current));
    p.current.clear();
  };
  auto finish = [&](Pending& p) {
    flush_paragraph(p);
    std::string body;
    for (std::size_t i = 0; i < p.paragraphs.size(); ++i) body += (i ? "\n\n" : "") + p.paragraphs[i];
    char num[16];
    std::snprintf(num, sizeof num, "%03zu", heading_count);
    const std::string id = std::string(source) + "#" + num;
    if (body.empty()) {
      out.diagnostics.push_back({std::string(source), p.line, false, "heading '" + p.key + "' has no body; slice skipped"});
      return;
    }
    std::istringstream words(body);
    std::size_t n = 0;
    for (std::string w; words >> w;) ++n;
    if (n < kSliceMinWords || n > kSliceMaxWords) {
      out.diagnostics.push_back({std::string(source), p.line, true,
                                 "slice '" + p.key + "' has " + std::to_string(n) + " words (expected about 80-120)"});
    }
    out.slices.push_back({id, p.key, std::move(body), std::string(source)});
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= markdown.size()) {
    const std::size_t eol = std::min(markdown.find('\n', pos), markdown.size());
    std::string_view line = markdown.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || std::isspace(static_cast<unsigned char>(line.back())))) {
      line.remove_suffix(1);
    }
    std::size_t hashes = 0;
    while (hashes < line.size() && line[hashes] == '#') ++hashes;
    if (hashes > 0 && (hashes == line.size() || line[hashes] == ' ')) {
      if (pending) finish(*pending);
      ++heading_count;
      std::string_view key = line.substr(hashes);
      while (!key.empty() && key.front() == ' ') key.remove_prefix(1);
      pending = Pending{std::string(key), line_no, {}, {}};
      if (pending->key.empty()) {
        out.diagnostics.push_back({std::string(source), line_no, false, "empty heading; slice skipped"});
        pending.reset();
      }
      continue;
    }
    std::string_view text = line;
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    if (!pending) {
      if (!text.empty() && !preamble_reported && heading_count == 0) {
        out.diagnostics.push_back({std::string(source), line_no, true, "text before the first heading ignored"});
        preamble_reported = true;
      }
      continue;
    }
    if (text.empty()) {
      flush_paragraph(*pending);
    } else {
      if (!pending->current.empty()) pending->current += ' ';
      pending->current += text;
    }
  }
  if (pending) finish(*pending);
  if (heading_count == 0) throw ParseError(std::string(source) + ": no headings found");
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// One raw (not necessarily normalized) vector per text.
  virtual std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) = 0;
  virtual std::size_t dimension() const = 0;
  /// Identifies the embedding space; an index only answers queries from the same space.
  virtual std::string fingerprint() const = 0;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::vector<std::string> lower_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

/// Deterministic in-process provider: each lower-cased token contributes a
/// pseudo-random direction seeded by its hash, so texts sharing words are close.
class MockEmbedding : public EmbeddingProvider {
 public:
  explicit MockEmbedding(std::size_t dimension = 64, std::uint64_t seed = 0x6b6e6f77ULL)
      : dim_(dimension), seed_(seed) {
    if (dim_ == 0) throw ValidationError("embedding dimension must be positive");
  }

  std::vector<std::vector<double>> embed_raw(const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      std::vector<double> v(dim_, 0.0);
      auto tokens = detail::lower_tokens(t);
      if (tokens.empty()) tokens.push_back(t);
      for (const auto& tok : tokens) {
        std::uint64_t state = detail::fnv1a(tok, seed_);
        for (auto& x : v) x += static_cast<double>(detail::splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
      }
      out.push_back(std::move(v));
    }
    return out;
  }

  std::size_t dimension() const override { return dim_; }
  std::string fingerprint() const override {
    return "mock-token-hash/d" + std::to_string(dim_) + "/seed" + std::to_string(seed_);
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Embeds in batches and returns unit vectors; rejects vectors of the wrong size.
inline std::vector<std::vector<double>> embed(const std::vector<std::string>& texts, EmbeddingProvider& provider,
                                              std::size_t batch_size = 32) {
  if (batch_size == 0) throw ValidationError("embedding batch size must be positive");
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (std::size_t b = 0; b < texts.size(); b += batch_size) {
    const std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(b),
                                         texts.begin() + static_cast<std::ptrdiff_t>(std::min(texts.size(), b + batch_size)));
    auto vecs = provider.embed_raw(batch);
    if (vecs.size() != batch.size()) {
      throw ValidationError("embedding provider returned " + std::to_string(vecs.size()) + " vectors for " +
                            std::to_string(batch.size()) + " texts");
    }
    for (auto& v : vecs) {
      if (v.size() != provider.dimension()) {
        throw ValidationError("dimension mismatch: expected " + std::to_string(provider.dimension()) + ", got " +
                              std::to_string(v.size()));
      }
      double sq = 0.0;
      for (double x : v) sq += x * x;
      const double norm = std::sqrt(sq);
      if (!(norm > 0) || !std::isfinite(norm)) throw ValidationError("embedding vector has zero or non-finite norm");
      for (double& x : v) x /= norm;
      out.push_back(std::move(v));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Index and retrieval

struct RetrievalHit {
  std::string slice_id;
  double fused_score = 0.0;
  std::size_t best_query_index = 0;

  bool operator==(const RetrievalHit&) const = default;
};

inline constexpr int kIndexSchemaVersion = 1;

/// Exact index over unit key vectors. Immutable once built; reads are thread safe.
class KnowledgeIndex {
 public:
  KnowledgeIndex(std::size_t dimension, std::string fingerprint)
      : dim_(dimension), fingerprint_(std::move(fingerprint)) {
    if (dim_ == 0) throw ValidationError("index dimension must be positive");
  }

  static KnowledgeIndex build(std::vector<KnowledgeSlice> slices, EmbeddingProvider& provider,
                              std::size_t batch_size = 32) {
    KnowledgeIndex idx(provider.dimension(), provider.fingerprint());
    std::vector<std::string> keys;
    keys.reserve(slices.size());
    for (const auto& s : slices) keys.push_back(s.key);
    auto vecs = embed(keys, provider, batch_size);
    for (std::size_t i = 0; i < slices.size(); ++i) idx.add(std::move(slices[i]), std::move(vecs[i]));
    return idx;
  }

  /// Adds a slice with a precomputed unit vector.
  void add(KnowledgeSlice slice, std::vector<double> unit_vector) {
    if (slice.id.empty() || slice.key.empty() || slice.body.empty()) {
      throw ValidationError("slice needs a non-empty id, key and body");
    }
    if (unit_vector.size() != dim_) throw ValidationError("dimension mismatch for slice " + slice.id);
    double sq = 0.0;
    for (double x : unit_vector) sq += x * x;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) throw ValidationError("slice vector is not unit length: " + slice.id);
    if (by_id_.count(slice.id)) throw ValidationError("duplicate slice id " + slice.id);
    by_id_.emplace(slice.id, slices_.size());
    slices_.push_back(std::move(slice));
    vectors_.push_back(std::move(unit_vector));
  }

  std::size_t size() const { return slices_.size(); }
  std::size_t dimension() const { return dim_; }
  const std::string& fingerprint() const { return fingerprint_; }
  const std::vector<KnowledgeSlice>& slices() const { return slices_; }
  const std::vector<double>& vector(std::size_t i) const { return vectors_.at(i); }

  const KnowledgeSlice* find(std::string_view id) const {
    const auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &slices_[it->second];
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["schema_version"] = kIndexSchemaVersion;
    j["dimension"] = dim_;
    j["fingerprint"] = fingerprint_;
    auto arr = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < slices_.size(); ++i) {
      nlohmann::ordered_json s;
      s["id"] = slices_[i].id;
      s["key"] = slices_[i].key;
      s["body"] = slices_[i].body;
      s["source"] = slices_[i].source;
      s["vector"] = vectors_[i];
      arr.push_back(std::move(s));
    }
    j["slices"] = std::move(arr);
    const auto path = dir / "index.json";
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write " + tmp);
      out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
  }

  static KnowledgeIndex load(const std::filesystem::path& dir) {
    const auto path = dir / "index.json";
    std::ifstream in(path);
    if (!in) throw Error("knowledge index not found: " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("index.json: malformed JSON: " + std::string(e.what()));
    }
    try {
      if (j.at("schema_version").get<int>() != kIndexSchemaVersion) {
        throw SchemaError("unsupported index schema_version " + j.at("schema_version").dump());
      }
      KnowledgeIndex idx(j.at("dimension").get<std::size_t>(), j.at("fingerprint").get<std::string>());
      for (const auto& s : j.at("slices")) {
        idx.add({s.at("id").get<std::string>(), s.at("key").get<std::string>(), s.at("body").get<std::string>(),
                 s.at("source").get<std::string>()},
                s.at("vector").get<std::vector<double>>());
      }
      return idx;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("index.json: " + std::string(e.what()));
    }
  }

 private:
  std::size_t dim_;
  std::string fingerprint_;
  std::vector<KnowledgeSlice> slices_;
  std::vector<std::vector<double>> vectors_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// Max-fusion top-k over unit query vectors. Ties in score go to the smaller slice id;
/// ties between queries go to the earlier query. k larger than the index returns all.
inline std::vector<RetrievalHit> fuse_topk(const std::vector<std::vector<double>>& query_vectors,
                                           const KnowledgeIndex& index, std::size_t k) {
  if (k == 0) throw ValidationError("k must be at least 1");
  if (query_vectors.empty()) throw ValidationError("at least one query is required");
  if (index.size() == 0) throw ValidationError("knowledge index is empty");
  std::vector<RetrievalHit> hits;
  hits.reserve(index.size());
  for (std::size_t j = 0; j < index.size(); ++j) {
    const auto& d = index.vector(j);
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_q = 0;
    for (std::size_t q = 0; q < query_vectors.size(); ++q) {
      const auto& v = query_vectors[q];
      if (v.size() != d.size()) throw ValidationError("dimension mismatch between query and index");
      double dot = 0.0;
      for (std::size_t t = 0; t < d.size(); ++t) dot += v[t] * d[t];
      if (dot > best) {
        best = dot;
        best_q = q;
      }
    }
    hits.push_back({index.slices()[j].id, std::clamp(best, -1.0, 1.0), best_q});
  }
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
    return a.slice_id < b.slice_id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

inline std::vector<RetrievalHit> retrieve_topk(const std::vector<std::string>& queries, const KnowledgeIndex& index,
                                               EmbeddingProvider& provider, std::size_t k) {
  if (k == 0) throw ValidationError("k must be at least 1");
  if (queries.empty()) throw ValidationError("at least one query is required");
  if (index.size() == 0) throw ValidationError("knowledge index is empty");
  if (provider.fingerprint() != index.fingerprint()) {
    throw ValidationError("embedding provider '" + provider.fingerprint() + "' does not match index '" +
                          index.fingerprint() + "'");
  }
  return fuse_topk(embed(queries, provider), index, k);
}

/// Read-side view of the knowledge base used by the agents.
class KnowledgeSource {
 public:
  virtual ~KnowledgeSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::vector<RetrievalHit> search(const std::vector<std::string>& queries, std::size_t k) = 0;
  virtual std::optional<KnowledgeSlice> slice(std::string_view id) const = 0;
};

class IndexedKnowledge : public KnowledgeSource {
 public:
  IndexedKnowledge(const KnowledgeIndex& index, EmbeddingProvider& provider) : index_(index), provider_(provider) {}

  std::size_t size() const override { return index_.size(); }
  std::vector<RetrievalHit> search(const std::vector<std::string>& queries, std::size_t k) override {
    return retrieve_topk(queries, index_, provider_, k);
  }
  std::optional<KnowledgeSlice> slice(std::string_view id) const override {
    const auto* s = index_.find(id);
    return s ? std::optional<KnowledgeSlice>(*s) : std::nullopt;
  }

 private:
  const KnowledgeIndex& index_;
  EmbeddingProvider& provider_;
};

// ---------------------------------------------------------------------------
// LLM-assisted steps

inline constexpr std::size_t kExpansionCount = 3;

struct ExpansionResult {
  std::vector<std::string> queries;
  bool degraded = false;
  StageTrace trace{Stage::expansion, {}, false, {}, 0.0};
};

/// Three sub-queries (causes, impacts, mitigation), then the original question
/// when include_original is set. Falls back to the question alone on failure.
inline ExpansionResult expand_query(const std::string& question, LlmClient& llm, bool include_original = true) {
  if (question.find_first_not_of(" \t\r\n") == std::string::npos) throw ValidationError("empty question");
  ExpansionResult r;
  const auto request = make_request(Stage::expansion, prompt_text::query_expansion, {{"question", question}});
  auto parsed = run_structured_stage<std::vector<std::string>>(
      llm, request,
      [](const std::string& raw) {
        const auto j = parse_model_json(raw, true);
        std::vector<std::string> qs;
        for (const auto& e : j) {
          if (!e.is_string() || e.get<std::string>().find_first_not_of(" \t\r\n") == std::string::npos) {
            throw ParseError("sub-queries must be non-empty strings");
          }
          qs.push_back(e.get<std::string>());
        }
        return qs;
      },
      [](const std::vector<std::string>& qs) {
        std::vector<std::string> problems;
        if (qs.size() != kExpansionCount) {
          problems.push_back("expected exactly " + std::to_string(kExpansionCount) + " sub-queries, got " +
                             std::to_string(qs.size()));
        }
        return problems;
      },
      r.trace, kRepairArray);
  if (parsed.degraded || !parsed.value) {
    r.degraded = true;
    r.trace.degraded = true;
    r.trace.notes.push_back("expansion failed; retrieving with the original question only");
    r.queries = {question};
    return r;
  }
  r.queries = std::move(*parsed.value);
  if (include_original) r.queries.push_back(question);
  return r;
}

struct DistillResult {
  ParsedSlices parsed;
  StageTrace trace{Stage::distillation, {}, false, {}, 0.0};
};

/// Turns one article into slices through the distillation prompt.
inline DistillResult distill_article(const std::string& article, const std::string& source, LlmClient& llm) {
  DistillResult r;
  const auto request = make_request(Stage::distillation, prompt_text::distillation, {{"article", article}});
  const auto text = run_text_stage(llm, request, r.trace);
  if (!text) throw TransportError("distillation call failed for " + source, static_cast<int>(r.trace.attempts.size()));
  r.parsed = parse_slices(*text, source);
  return r;
}

}  // namespace bessom
