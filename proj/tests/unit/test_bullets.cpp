#include <gtest/gtest.h>

#include <set>

#include "bessom/bessom.hpp"
#include "scenarios.hpp"

namespace {

std::set<std::string> rules_hit(const bessom::BulletReport& r) {
  std::set<std::string> s;
  for (const auto& v : r.violations) s.insert(v.rule);
  return s;
}

TEST(Bullets, RubricSuite) {
  for (const auto& c : scen::rubric_suite()) {
    const auto r = bessom::validate_bullets(c.text, scen::rubric_rules());
    EXPECT_EQ(r.valid, c.valid) << c.name;
    EXPECT_EQ(rules_hit(r), c.rules) << c.name;
  }
}

TEST(Bullets, WordCountIgnoresPrefixAndTag) {
  EXPECT_EQ(bessom::bullet_content_words("- [Data] one two three [RAG][LLM]"), 3u);
  EXPECT_EQ(bessom::bullet_content_words("- one two"), 2u);
  EXPECT_EQ(bessom::bullet_content_words("- [LLM]"), 0u);
}

TEST(Bullets, DecimalsAndAbbreviationsAreOneSentence) {
  const auto r = bessom::validate_bullets("- Pack 3 SOH fell to 0.94 over the month\n- Mean spread 1.2 mV e.g. on cell 5\n"
                                          "- No change elsewhere\n",
                                          bessom::data_brief_rules());
  EXPECT_TRUE(r.valid) << bessom::describe(r).front();
}

TEST(Bullets, SynthesisPrefixes) {
  const auto rules = bessom::synthesis_rules();
  EXPECT_TRUE(bessom::validate_bullets("- [Data] a b\n- [Knowledge] c d\n- [Integrated] e f\n", rules).valid);
  const auto r = bessom::validate_bullets("- [Data] a b\n- c d\n- [Other] e f\n", rules);
  EXPECT_FALSE(r.valid);
  EXPECT_EQ(rules_hit(r), std::set<std::string>{"prefix"});
  EXPECT_EQ(r.violations.size(), 2u);
}

TEST(Bullets, KnowledgeSummaryNeedsEachPrefixOnceOrTwice) {
  const auto rules = bessom::knowledge_summary_rules();
  EXPECT_TRUE(bessom::validate_bullets("- [Mechanism] a b [RAG]\n- [Cause] c d [LLM]\n- [Mitigation] e f [RAG][LLM]\n",
                                       rules)
                  .valid);
  const auto missing =
      bessom::validate_bullets("- [Mechanism] a b [RAG]\n- [Mechanism] c d [RAG]\n- [Cause] e f [RAG]\n", rules);
  EXPECT_EQ(rules_hit(missing), std::set<std::string>{"prefix"});
  const auto three = bessom::validate_bullets(
      "- [Mechanism] a [RAG]\n- [Mechanism] b [RAG]\n- [Mechanism] c [RAG]\n- [Cause] d [RAG]\n- [Mitigation] e [RAG]\n",
      rules);
  EXPECT_EQ(rules_hit(three), std::set<std::string>{"prefix"});
}

TEST(Bullets, DescribeListsEveryViolation) {
  const auto r = bessom::validate_bullets("intro\n- a\n", scen::rubric_rules());
  const auto lines = bessom::describe(r);
  EXPECT_EQ(lines.size(), r.violations.size());
  EXPECT_FALSE(lines.empty());
}

// Random lists built to satisfy the rubric, then optionally broken by one
// known mutation.
struct Generated {
  std::string text;
  std::set<std::string> expected;
};

Generated generate(scen::Gen& g) {
  const char* tags[] = {" [RAG]", " [LLM]", " [RAG][LLM]"};
  std::vector<std::string> bullets;
  const int n = g.integer(3, 6);
  for (int i = 0; i < n; ++i) {
    bullets.push_back("- " + scen::words(static_cast<std::size_t>(g.integer(1, 24)), "w") + tags[g.index(3)]);
  }
  Generated out;
  switch (g.integer(0, 5)) {
    case 0:
      break;
    case 1:
      bullets.erase(bullets.begin(), bullets.begin() + (n - 2));
      out.expected = {"count"};
      break;
    case 2:
      bullets[g.index(bullets.size())] = "- " + scen::words(static_cast<std::size_t>(g.integer(25, 40)), "w") + " [RAG]";
      out.expected = {"word_limit"};
      break;
    case 3:
      bullets[g.index(bullets.size())] = "- " + scen::words(5, "w");
      out.expected = {"missing_tag"};
      break;
    case 4:
      bullets.insert(bullets.begin() + static_cast<std::ptrdiff_t>(g.index(bullets.size())), "Note follows");
      out.expected = {"extra_text"};
      break;
    case 5:
      bullets[g.index(bullets.size())] = "- First part. Second part [LLM]";
      out.expected = {"single_sentence"};
      break;
  }
  for (const auto& b : bullets) out.text += b + (g.coin(0.2) ? "\n\n" : "\n");
  return out;
}

TEST(BulletsProperty, DetectsExactlyTheInjectedDefect) {
  scen::Gen g(61);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = generate(g);
    const auto r = bessom::validate_bullets(c.text, scen::rubric_rules());
    EXPECT_EQ(rules_hit(r), c.expected) << c.text;
    EXPECT_EQ(r.valid, c.expected.empty());
  }
}

TEST(BulletsProperty, TotalOnArbitraryBytes) {
  scen::Gen g(62);
  const std::string alphabet = "- []\n.AaRGLM?!\t*";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const int len = g.integer(0, 80);
    for (int i = 0; i < len; ++i) s += alphabet[g.index(alphabet.size())];
    for (const auto& rules : {scen::rubric_rules(), bessom::knowledge_summary_rules(), bessom::synthesis_rules()}) {
      const auto r = bessom::validate_bullets(s, rules);
      EXPECT_EQ(r.valid, r.violations.empty());
      EXPECT_EQ(r.bullet_count, r.bullets.size());
    }
  }
}

}  // namespace
