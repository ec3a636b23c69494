#include <gtest/gtest.h>

#include "bessom/bessom.hpp"
#include "fakes.hpp"
#include "scenarios.hpp"

namespace {

using bessom::Date;
using bessom::Route;
using bessom::Stage;

// Fixture records for 2024-05-01..2024-05-20 and the bundled corpus.
class AgentTest : public ::testing::Test {
 protected:
  AgentTest() : gen_(81), store_(scen::fixture_store(Date::parse("2024-05-01"), 20, 9, gen_)),
                index_(bessom::KnowledgeIndex::build(scen::corpus_slices(), embed_)), knowledge_(index_, embed_) {}

  bessom::AgentDeps deps(bessom::LlmClient& llm, const bessom::RecordSource* records = nullptr,
                         bessom::KnowledgeSource* knowledge = nullptr) {
    return {llm, records ? records : &store_, knowledge ? knowledge : &knowledge_, {}};
  }

  scen::Gen gen_;
  bessom::RecordStore store_;
  bessom::MockEmbedding embed_;
  bessom::KnowledgeIndex index_;
  bessom::IndexedKnowledge knowledge_;
};

std::string data_reply(const std::string& brief) {
  nlohmann::json j;
  j["data_analysis"] = "analysis";
  j["data_summary"] = "summary";
  j["data_brief"] = brief;
  return j.dump();
}

TEST(Router, FixtureQuestionsRouteAsLabelled) {
  bessom::MockLlm llm;
  const auto cases = scen::routing_questions();
  ASSERT_EQ(cases.size(), 30u);
  for (const auto& c : cases) {
    const auto r = bessom::route(c.question, llm);
    EXPECT_EQ(r.query.route, c.expected) << c.question;
    EXPECT_FALSE(r.degraded) << c.question;
    if (bessom::wants_data(r.query.route)) {
      EXPECT_TRUE(r.query.date_from.has_value()) << c.question;
    } else {
      EXPECT_TRUE(r.query.data_query.empty());
    }
    if (!bessom::wants_knowledge(r.query.route)) {
      EXPECT_TRUE(r.query.knowledge_query.empty());
    }
  }
}

TEST(Router, DateRangeSpansAllDatesInTheQuery) {
  bessom::MockLlm llm;
  const auto r = bessom::route("Compare 2024-05-09 with 2024-05-02 and 2024-05-04.", llm);
  EXPECT_EQ(r.query.date_from->iso(), "2024-05-02");
  EXPECT_EQ(r.query.date_to->iso(), "2024-05-09");
}

TEST(Router, InvalidJsonGetsOneRepairThenFallsBack) {
  fakes::ScriptedLlm llm;
  llm.push(Stage::router, "route: data_only");
  llm.push(Stage::router, R"({"route": "sideways", "data_query": "", "knowledge_query": ""})");
  const auto r = bessom::route("Show 2024-05-01 to 2024-05-03 voltage spread.", llm);
  EXPECT_EQ(llm.count(Stage::router), 2u);
  EXPECT_TRUE(r.degraded);
  EXPECT_EQ(r.query.route, Route::data_and_knowledge);
  EXPECT_EQ(r.query.data_query, r.query.knowledge_query);
  EXPECT_EQ(r.query.date_to->iso(), "2024-05-03");
  EXPECT_NE(llm.calls()[1].user.find(bessom::kRepairObject), std::string::npos);
}

TEST(Router, RepairedReplyIsUsed) {
  fakes::ScriptedLlm llm;
  llm.push(Stage::router, "```json\n{}\n```");
  llm.push(Stage::router, R"({"route": "knowledge_only", "data_query": "x", "knowledge_query": ""})");
  const auto r = bessom::route("What causes drift?", llm);
  EXPECT_FALSE(r.degraded);
  EXPECT_EQ(r.query.route, Route::knowledge_only);
  EXPECT_TRUE(r.query.data_query.empty());
  EXPECT_EQ(r.query.knowledge_query, "What causes drift?");
}

TEST(Router, ImpossibleDateIsReportedNotGuessed) {
  bessom::MockLlm llm;
  const auto r = bessom::route("Show records from 2024-02-30 to 2024-03-02.", llm);
  EXPECT_TRUE(r.degraded);
  EXPECT_FALSE(r.query.date_from.has_value());
}

TEST_F(AgentTest, DataOnlyNeverTouchesKnowledge) {
  bessom::MockLlm llm;
  fakes::RecordingKnowledge knowledge(knowledge_);
  fakes::RecordingRecords records(store_);
  const auto fa = bessom::answer("Show the voltage spread from 2024-05-03 to 2024-05-05.", deps(llm, &records, &knowledge));
  EXPECT_EQ(fa.route, Route::data_only);
  EXPECT_EQ(knowledge.touches(), 0u);
  EXPECT_GT(records.touches(), 0u);
  EXPECT_EQ(records.ranges.front(), std::make_pair(Date::parse("2024-05-03"), Date::parse("2024-05-05")));
  EXPECT_FALSE(fa.audit.knowledge);
  EXPECT_FALSE(fa.degraded);
  EXPECT_TRUE(bessom::validate_bullets(fa.audit.data->output->data_brief, bessom::data_brief_rules()).valid);
}

TEST_F(AgentTest, KnowledgeOnlyNeverTouchesRecords) {
  bessom::MockLlm llm;
  fakes::RecordingKnowledge knowledge(knowledge_);
  fakes::RecordingRecords records(store_);
  const auto fa = bessom::answer("Why do cells in a pack drift apart over time?", deps(llm, &records, &knowledge));
  EXPECT_EQ(fa.route, Route::knowledge_only);
  EXPECT_EQ(records.touches(), 0u);
  EXPECT_EQ(knowledge.search_calls, 1u);
  ASSERT_EQ(knowledge.searched.size(), 1u);
  EXPECT_EQ(knowledge.searched[0].size(), 4u);
  EXPECT_FALSE(fa.audit.data);
  EXPECT_FALSE(fa.audit.synthesis);
  EXPECT_EQ(fa.audit.knowledge->retrieved.size(), 5u);
  EXPECT_TRUE(bessom::validate_bullets(*fa.knowledge_summary, bessom::knowledge_summary_rules()).valid);
}

TEST_F(AgentTest, DataAndKnowledgeSynthesizesThreeSections) {
  bessom::MockLlm llm;
  const auto fa = bessom::answer("Explain why the voltage spread grew from 2024-05-01 to 2024-05-20.", deps(llm));
  EXPECT_EQ(fa.route, Route::data_and_knowledge);
  EXPECT_FALSE(fa.degraded);
  ASSERT_TRUE(fa.audit.synthesis);
  ASSERT_EQ(fa.bullets.size(), 3u);
  EXPECT_EQ(fa.bullets[0].rfind("- [Data]", 0), 0u);
  EXPECT_EQ(fa.bullets[1].rfind("- [Knowledge]", 0), 0u);
  EXPECT_EQ(fa.bullets[2].rfind("- [Integrated]", 0), 0u);
  EXPECT_EQ(fa.audit.data->records_used, 20u);
  std::vector<std::string> stages;
  for (const auto& [name, ms] : fa.timings_ms) {
    stages.push_back(name);
    EXPECT_GE(ms, 0.0);
  }
  EXPECT_EQ(stages, (std::vector<std::string>{"router", "data", "expansion", "retrieval", "expert", "integration",
                                              "synthesis", "total"}));
}

TEST_F(AgentTest, SevenBulletBriefIsRepairedOnce) {
  fakes::ScriptedLlm llm;
  llm.push(Stage::data, data_reply(scen::bullet_list(7, 6, "")));
  llm.push(Stage::data, data_reply(scen::bullet_list(4, 6, "")));
  const auto fa = bessom::answer("Show SOH from 2024-05-01 to 2024-05-02.", deps(llm));
  EXPECT_EQ(llm.count(Stage::data), 2u);
  EXPECT_FALSE(fa.degraded);
  EXPECT_EQ(fa.bullets.size(), 4u);
  EXPECT_NE(fa.audit.data->trace.attempts[0].error.find("count"), std::string::npos);
}

TEST_F(AgentTest, SecondBadBriefDegradesButAnswers) {
  fakes::ScriptedLlm llm;
  llm.push(Stage::data, data_reply(scen::bullet_list(7, 6, "")));
  llm.push(Stage::data, data_reply(scen::bullet_list(8, 6, "")));
  const auto fa = bessom::answer("Show SOH from 2024-05-01 to 2024-05-02.", deps(llm));
  EXPECT_EQ(llm.count(Stage::data), 2u);
  EXPECT_TRUE(fa.degraded);
  EXPECT_FALSE(fa.audit.data->violations.empty());
  EXPECT_EQ(fa.bullets.size(), 8u);
}

TEST_F(AgentTest, EmptyRangeGivesNoRecordsBrief) {
  bessom::MockLlm llm;
  const auto fa = bessom::answer("Show SOH from 2023-01-01 to 2023-01-05.", deps(llm));
  ASSERT_TRUE(fa.audit.data->output);
  EXPECT_TRUE(fa.audit.data->output->no_records);
  EXPECT_EQ(fa.audit.data->trace.attempts.size(), 0u);
  EXPECT_EQ(fa.bullets.size(), 3u);
  EXPECT_NE(fa.bullets[0].find("2023-01-01 to 2023-01-05"), std::string::npos);
}

TEST_F(AgentTest, EmptyStoreUsesDefaultWindowAndNoRecords) {
  bessom::MockLlm llm;
  bessom::RecordStore empty(9);
  const auto rq = bessom::route("Show the voltage spread.", llm).query;
  bessom::RoutedQuery q = rq;
  q.route = Route::data_only;
  q.data_query = "Show the voltage spread.";
  const auto run = bessom::run_data_agent(q, empty, llm);
  EXPECT_TRUE(run.output->no_records);
  EXPECT_EQ(run.to, bessom::date_of(0));
  EXPECT_EQ(run.from, bessom::date_of(0).plus_days(-29));
}

TEST_F(AgentTest, NoDatesUsesWindowEndingAtLatestRecord) {
  bessom::MockLlm llm;
  bessom::RoutedQuery q{Route::data_only, "How are the packs doing?", "", std::nullopt, std::nullopt};
  const auto run = bessom::run_data_agent(q, store_, llm, 7);
  EXPECT_EQ(run.to.iso(), "2024-05-20");
  EXPECT_EQ(run.from.iso(), "2024-05-14");
  EXPECT_EQ(run.records_used, 7u);
}

TEST_F(AgentTest, EmptyIndexFallsBackToExpertReasoning) {
  bessom::MockLlm llm;
  bessom::KnowledgeIndex empty(64, embed_.fingerprint());
  bessom::IndexedKnowledge none(empty, embed_);
  const auto fa = bessom::answer("What causes thermal gradients?", deps(llm, nullptr, &none));
  ASSERT_TRUE(fa.audit.knowledge);
  EXPECT_TRUE(fa.audit.knowledge->retrieved.empty());
  EXPECT_EQ(fa.audit.knowledge->output->relevance, bessom::Relevance::low);
  EXPECT_TRUE(fa.degraded);
  EXPECT_FALSE(fa.bullets.empty());
  EXPECT_FALSE(fa.error);
}

TEST_F(AgentTest, SingleStageFailuresDegradeWithoutCrashing) {
  const std::string q = "Explain why the voltage spread grew from 2024-05-01 to 2024-05-20.";
  for (Stage failing : {Stage::router, Stage::data, Stage::expansion, Stage::expert, Stage::integration,
                        Stage::synthesis}) {
    fakes::ScriptedLlm llm;
    llm.push(failing, std::nullopt);
    const auto fa = bessom::answer(q, deps(llm));
    EXPECT_TRUE(fa.degraded) << bessom::to_string(failing);
    EXPECT_FALSE(fa.bullets.empty()) << bessom::to_string(failing);
    EXPECT_FALSE(fa.error) << bessom::to_string(failing);
  }
}

TEST_F(AgentTest, BothBranchesFailingReportsError) {
  fakes::ScriptedLlm llm;
  llm.push(Stage::data, std::nullopt);
  llm.push(Stage::integration, std::nullopt);
  const auto fa = bessom::answer("Explain why the voltage spread grew from 2024-05-01 to 2024-05-20.", deps(llm));
  EXPECT_TRUE(fa.error);
  EXPECT_TRUE(fa.bullets.empty());
}

TEST_F(AgentTest, MissingSourceIsABranchFailure) {
  bessom::MockLlm llm;
  bessom::AgentDeps d{llm, nullptr, &knowledge_, {}};
  const auto fa = bessom::answer("Show SOH from 2024-05-01 to 2024-05-02.", d);
  EXPECT_TRUE(fa.error);
  ASSERT_FALSE(fa.audit.notes.empty());
  EXPECT_NE(fa.audit.notes[0].find("no record store"), std::string::npos);
}

TEST_F(AgentTest, ExpiredDeadlineSkipsSynthesis) {
  bessom::MockLlm llm;
  auto d = deps(llm);
  d.options.deadline_s = 0.0;
  const auto fa = bessom::answer("Explain why the voltage spread grew from 2024-05-01 to 2024-05-20.", d);
  EXPECT_FALSE(fa.audit.synthesis);
  EXPECT_TRUE(fa.degraded);
  EXPECT_FALSE(fa.bullets.empty());
}

TEST_F(AgentTest, AnswersAreDeterministicAndAuditCarriesPrompts) {
  const std::string q = "Explain why the voltage spread grew from 2024-05-01 to 2024-05-20.";
  bessom::MockLlm a, b;
  const auto first = bessom::to_json(bessom::answer(q, deps(a)), false).dump(2);
  const auto second = bessom::to_json(bessom::answer(q, deps(b)), false).dump(2);
  EXPECT_EQ(first, second);

  const auto j = nlohmann::json::parse(first);
  EXPECT_EQ(j["audit"]["prompt_version"], "v1");
  EXPECT_EQ(j["audit"]["model"], "mock-deterministic-v1");
  const auto router_system = bessom::split_prompt(bessom::prompt_text::router).system;
  EXPECT_EQ(j["audit"]["stages"][0]["stage"], "router");
  EXPECT_EQ(j["audit"]["stages"][0]["attempts"][0]["system"], std::string(router_system));
  EXPECT_EQ(j["audit"]["stages"][0]["attempts"][0]["user"], q);
  EXPECT_EQ(j["audit"]["stages"].size(), 6u);
  EXPECT_FALSE(j.contains("timings_ms"));
  EXPECT_TRUE(bessom::to_json(bessom::answer(q, deps(a))).contains("timings_ms"));
  EXPECT_EQ(j["audit"]["retrieval_hits"].size(), 5u);
}

}  // namespace
