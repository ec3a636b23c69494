#include <gtest/gtest.h>

#include <algorithm>

#include "bessom/bessom.hpp"
#include "fakes.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"

namespace {

using bessom::Stage;

TEST(ParseSlices, SplitsAtHeadingsAndNumbersByPosition) {
  const std::string md =
      "Preamble text.\n"
      "# First key\n"
      "line one\nline two\n\nsecond paragraph\n"
      "## \n"
      "# Empty body\n"
      "\n"
      "# Third key\n"
      "  indented body  \r\n";
  const auto p = bessom::parse_slices(md, "doc");
  ASSERT_EQ(p.slices.size(), 2u);
  EXPECT_EQ(p.slices[0].id, "doc#001");
  EXPECT_EQ(p.slices[0].key, "First key");
  EXPECT_EQ(p.slices[0].body, "line one line two\n\nsecond paragraph");
  EXPECT_EQ(p.slices[1].id, "doc#004");
  EXPECT_EQ(p.slices[1].body, "indented body");
  EXPECT_EQ(p.slices[1].source, "doc");

  std::size_t errors = 0, warnings = 0;
  for (const auto& d : p.diagnostics) (d.warning_only ? warnings : errors)++;
  EXPECT_EQ(errors, 2u);    // empty heading, empty body
  EXPECT_EQ(warnings, 3u);  // preamble, two short slices
  EXPECT_EQ(p.diagnostics.front().line, 1u);
}

TEST(ParseSlices, RejectsDocumentWithoutHeadings) {
  EXPECT_THROW(bessom::parse_slices("just text\n", "x"), bessom::ParseError);
}

TEST(ParseSlices, BundledCorpusIsClean) {
  for (const auto& e : std::filesystem::directory_iterator(scen::source_dir() / "corpus")) {
    const auto p = bessom::parse_slices(scen::read_file(e.path()), e.path().stem().string());
    EXPECT_TRUE(p.diagnostics.empty()) << e.path();
    EXPECT_FALSE(p.slices.empty());
  }
  EXPECT_EQ(scen::corpus_slices().size(), 30u);
}

TEST(MockEmbedding, DeterministicAndFingerprinted) {
  bessom::MockEmbedding a, b;
  const std::vector<std::string> texts{"Cell voltage spread", "thermal gradient"};
  EXPECT_EQ(a.embed_raw(texts), b.embed_raw(texts));
  EXPECT_EQ(a.fingerprint(), "mock-token-hash/d64/seed1802399607");
  EXPECT_NE(bessom::MockEmbedding(64, 2).fingerprint(), a.fingerprint());
  // case folding
  EXPECT_EQ(a.embed_raw({"VOLTAGE"}), a.embed_raw({"voltage"}));
}

TEST(Embed, NormalizesAndBatches) {
  fakes::TableEmbedding t(3);
  t.set("a", {3, 0, 4});
  t.set("b", {0, 2, 0});
  t.set("c", {1, 1, 1});
  const auto v = bessom::embed({"a", "b", "c"}, t, 2);
  EXPECT_EQ(t.batches, 2u);
  EXPECT_NEAR(v[0][0], 0.6, 1e-15);
  EXPECT_NEAR(v[0][2], 0.8, 1e-15);
  EXPECT_EQ(v[1][1], 1.0);
  EXPECT_THROW(bessom::embed({"a"}, t, 0), bessom::ValidationError);
}

TEST(Embed, RejectsWrongDimensionAndZeroVectors) {
  fakes::TableEmbedding t(3);
  t.set("short", {1, 0});
  t.set("zero", {0, 0, 0});
  EXPECT_THROW(bessom::embed({"short"}, t), bessom::ValidationError);
  EXPECT_THROW(bessom::embed({"zero"}, t), bessom::ValidationError);
}

bessom::KnowledgeIndex corpus_index(bessom::EmbeddingProvider& e) {
  return bessom::KnowledgeIndex::build(scen::corpus_slices(), e, 7);
}

TEST(KnowledgeIndex, SliceKeyRetrievesItselfFirst) {
  bessom::MockEmbedding e;
  const auto idx = corpus_index(e);
  for (const auto& s : idx.slices()) {
    const auto hits = bessom::retrieve_topk({s.key}, idx, e, 3);
    ASSERT_FALSE(hits.empty());
    EXPECT_EQ(hits[0].slice_id, s.id);
    EXPECT_NEAR(hits[0].fused_score, 1.0, 1e-12);
  }
}

TEST(KnowledgeIndex, RejectsBadSlicesAndMismatchedProviders) {
  bessom::KnowledgeIndex idx(3, "table/d3");
  EXPECT_THROW(idx.add({"a", "k", "b", "s"}, {1, 0}), bessom::ValidationError);
  EXPECT_THROW(idx.add({"a", "k", "b", "s"}, {1, 1, 0}), bessom::ValidationError);
  EXPECT_THROW(idx.add({"", "k", "b", "s"}, {1, 0, 0}), bessom::ValidationError);
  idx.add({"a", "k", "b", "s"}, {1, 0, 0});
  EXPECT_THROW(idx.add({"a", "k2", "b", "s"}, {0, 1, 0}), bessom::ValidationError);

  bessom::MockEmbedding mock(3);
  EXPECT_THROW(bessom::retrieve_topk({"k"}, idx, mock, 1), bessom::ValidationError);
  fakes::TableEmbedding t(3);
  t.set("k", {1, 0, 0});
  EXPECT_THROW(bessom::retrieve_topk({"k"}, idx, t, 0), bessom::ValidationError);
  EXPECT_THROW(bessom::retrieve_topk({}, idx, t, 1), bessom::ValidationError);
  EXPECT_THROW(bessom::retrieve_topk({"k"}, bessom::KnowledgeIndex(3, "table/d3"), t, 1), bessom::ValidationError);
  EXPECT_EQ(bessom::retrieve_topk({"k"}, idx, t, 10).size(), 1u);
}

TEST(KnowledgeIndex, SaveLoadRoundTrip) {
  scen::TempDir dir("index");
  bessom::MockEmbedding e;
  const auto idx = corpus_index(e);
  idx.save(dir.path());
  const auto back = bessom::KnowledgeIndex::load(dir.path());
  EXPECT_EQ(back.size(), idx.size());
  EXPECT_EQ(back.fingerprint(), idx.fingerprint());
  EXPECT_EQ(back.slices(), idx.slices());
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(back.vector(i), idx.vector(i));
  const std::vector<std::string> q{"why do cells drift apart", "cooling"};
  EXPECT_EQ(bessom::retrieve_topk(q, back, e, 5), bessom::retrieve_topk(q, idx, e, 5));
  ASSERT_NE(back.find(idx.slices()[3].id), nullptr);
  EXPECT_EQ(back.find("nope#000"), nullptr);
  EXPECT_THROW(bessom::KnowledgeIndex::load(dir.path() / "missing"), bessom::Error);
}

TEST(KnowledgeIndex, LoadRejectsOtherSchema) {
  scen::TempDir dir("index-schema");
  {
    std::ofstream f(dir.path() / "index.json");
    f << R"({"schema_version": 2, "dimension": 3, "fingerprint": "x", "slices": []})";
  }
  EXPECT_THROW(bessom::KnowledgeIndex::load(dir.path()), bessom::SchemaError);
  {
    std::ofstream f(dir.path() / "index.json", std::ios::trunc);
    f << R"({"schema_version": 1, "dimension": 3})";
  }
  EXPECT_THROW(bessom::KnowledgeIndex::load(dir.path()), bessom::ParseError);
}

// Random keys and queries through the table provider, checked against the
// brute-force fused ranking.
struct RetrievalCase {
  fakes::TableEmbedding provider{8};
  bessom::KnowledgeIndex index{8, "table/d8"};
  std::vector<std::pair<std::string, std::vector<double>>> keys;
  std::vector<std::string> queries;
  std::vector<std::vector<double>> query_vectors;
};

std::vector<double> random_vector(scen::Gen& g, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = g.normal();
  return v;
}

std::unique_ptr<RetrievalCase> random_case(scen::Gen& g, std::size_t n_keys, std::size_t n_queries) {
  auto c = std::make_unique<RetrievalCase>();
  for (std::size_t j = 0; j < n_keys; ++j) {
    char id[16];
    std::snprintf(id, sizeof id, "k#%03zu", j);
    auto v = random_vector(g, 8);
    c->provider.set(std::string("key ") + id, v);
    c->keys.emplace_back(id, v);
  }
  std::vector<std::string> key_texts;
  for (const auto& [id, v] : c->keys) key_texts.push_back("key " + id);
  const auto unit = bessom::embed(key_texts, c->provider);
  for (std::size_t j = 0; j < n_keys; ++j) c->index.add({c->keys[j].first, key_texts[j], "body", "gen"}, unit[j]);
  for (std::size_t q = 0; q < n_queries; ++q) {
    c->queries.push_back("query " + std::to_string(q));
    c->query_vectors.push_back(random_vector(g, 8));
    c->provider.set(c->queries.back(), c->query_vectors.back());
  }
  return c;
}

TEST(RetrievalProperty, MatchesBruteForceFusion) {
  scen::Gen g(71);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n_keys = static_cast<std::size_t>(g.integer(1, 60));
    const auto c = random_case(g, n_keys, static_cast<std::size_t>(g.integer(1, 4)));
    const auto k = static_cast<std::size_t>(g.integer(1, 70));
    const auto got = bessom::retrieve_topk(c->queries, c->index, c->provider, k);
    const auto want = oracle::fused_topk(c->query_vectors, c->keys, k);
    ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
    for (std::size_t r = 0; r < got.size(); ++r) {
      EXPECT_EQ(got[r].slice_id, want[r].id) << "trial " << trial << " rank " << r;
      EXPECT_NEAR(got[r].fused_score, want[r].score, 1e-12);
      EXPECT_EQ(got[r].best_query_index, want[r].query);
      EXPECT_GE(got[r].fused_score, -1.0);
      EXPECT_LE(got[r].fused_score, 1.0);
      if (r > 0) {
        EXPECT_GE(got[r - 1].fused_score, got[r].fused_score);
      }
    }
  }
}

TEST(RetrievalProperty, QueryOrderOnlyChangesBestQueryIndex) {
  scen::Gen g(72);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = random_case(g, 40, 4);
    auto shuffled = c->queries;
    std::shuffle(shuffled.begin(), shuffled.end(), g.engine());
    const auto a = bessom::retrieve_topk(c->queries, c->index, c->provider, 5);
    const auto b = bessom::retrieve_topk(shuffled, c->index, c->provider, 5);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t r = 0; r < a.size(); ++r) {
      EXPECT_EQ(a[r].slice_id, b[r].slice_id);
      EXPECT_EQ(a[r].fused_score, b[r].fused_score);
      EXPECT_EQ(c->queries[a[r].best_query_index], shuffled[b[r].best_query_index]);
    }
  }
}

TEST(Retrieval, TiesGoToSmallerIdAndEarlierQuery) {
  fakes::TableEmbedding t(2);
  bessom::KnowledgeIndex idx(2, "table/d2");
  idx.add({"b#001", "kb", "x", "s"}, {1, 0});
  idx.add({"a#001", "ka", "x", "s"}, {1, 0});
  idx.add({"c#001", "kc", "x", "s"}, {0, 1});
  t.set("q1", {1, 0});
  t.set("q2", {1, 0});
  const auto hits = bessom::retrieve_topk({"q1", "q2"}, idx, t, 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].slice_id, "a#001");
  EXPECT_EQ(hits[1].slice_id, "b#001");
  EXPECT_EQ(hits[0].best_query_index, 0u);
  EXPECT_EQ(hits[2].slice_id, "c#001");
  EXPECT_NEAR(hits[2].fused_score, 0.0, 1e-15);
}

TEST(ExpandQuery, ThreeSubQueriesPlusOriginal) {
  bessom::MockLlm llm;
  const auto r = bessom::expand_query("Why does pack 3 run hot?", llm);
  ASSERT_EQ(r.queries.size(), 4u);
  EXPECT_FALSE(r.degraded);
  EXPECT_EQ(r.queries.back(), "Why does pack 3 run hot?");
  EXPECT_EQ(bessom::expand_query("Why does pack 3 run hot?", llm, false).queries.size(), 3u);
  EXPECT_THROW(bessom::expand_query("  ", llm), bessom::ValidationError);
}

TEST(ExpandQuery, RepairsOnceThenFallsBack) {
  fakes::ScriptedLlm llm;
  llm.push(Stage::expansion, "```json\n[\"a\",\"b\",\"c\"]\n```");
  llm.push(Stage::expansion, R"(["a", "b", "c"])");
  const auto fixed = bessom::expand_query("question", llm);
  EXPECT_FALSE(fixed.degraded);
  EXPECT_EQ(fixed.queries, (std::vector<std::string>{"a", "b", "c", "question"}));
  ASSERT_EQ(fixed.trace.attempts.size(), 2u);
  EXPECT_NE(fixed.trace.attempts[1].user.find(bessom::kRepairArray), std::string::npos);

  fakes::ScriptedLlm bad;
  bad.push(Stage::expansion, R"(["only one"])");
  bad.push(Stage::expansion, R"(["a", "b"])");
  const auto fb = bessom::expand_query("question", bad);
  EXPECT_TRUE(fb.degraded);
  EXPECT_EQ(fb.queries, std::vector<std::string>{"question"});
  EXPECT_EQ(bad.count(Stage::expansion), 2u);

  fakes::ScriptedLlm down;
  down.push(Stage::expansion, std::nullopt);
  const auto off = bessom::expand_query("question", down);
  EXPECT_TRUE(off.degraded);
  EXPECT_EQ(down.count(Stage::expansion), 1u);
}

TEST(DistillArticle, ProducesParsableSlices) {
  fakes::ScriptedLlm llm;
  llm.push(Stage::distillation, "# Key one\n\nBody one.\n\n# Key two\n\nBody two.\n");
  const auto r = bessom::distill_article("article text", "art", llm);
  ASSERT_EQ(r.parsed.slices.size(), 2u);
  EXPECT_EQ(r.parsed.slices[1].id, "art#002");
  ASSERT_EQ(llm.calls().size(), 1u);
  EXPECT_NE(llm.calls()[0].user.find("article text"), std::string::npos);
  llm.push(Stage::distillation, std::nullopt);
  EXPECT_THROW(bessom::distill_article("x", "y", llm), bessom::TransportError);
}

}  // namespace
