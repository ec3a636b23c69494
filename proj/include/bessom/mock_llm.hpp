#pragma once

// Deterministic rule-based stand-in for a chat model. Each stage reads the
// rendered prompt it receives and answers in that stage's output protocol, so
// whole query pipelines run offline and repeat byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bessom/bullets.hpp"
#include "bessom/llm.hpp"
#include "json.hpp"

namespace bessom {

namespace mock_detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// The user message without any repair instructions appended by a retry.
inline std::string_view original_user(std::string_view user) {
  const auto cut = user.find("\n\nYour previous output was rejected:");
  return cut == std::string_view::npos ? user : user.substr(0, cut);
}

inline std::string_view between(std::string_view text, std::string_view begin, std::string_view end) {
  const auto b = text.find(begin);
  if (b == std::string_view::npos) return {};
  const auto start = b + begin.size();
  const auto e = end.empty() ? std::string_view::npos : text.find(end, start);
  return text.substr(start, e == std::string_view::npos ? std::string_view::npos : e - start);
}

inline std::string truncate_words(std::string_view text, std::size_t n) {
  std::istringstream in{std::string(text)};
  std::string out, w;
  for (std::size_t i = 0; i < n && in >> w; ++i) out += (i ? " " : "") + w;
  return out;
}

inline std::string strip_sentence_end(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == '?' || s.back() == '!' || s.back() == ' ')) s.pop_back();
  return s;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline bool has_any(const std::string& lowered, std::initializer_list<std::string_view> words) {
  for (auto w : words) {
    if (lowered.find(w) != std::string::npos) return true;
  }
  return false;
}

/// Bullet lines of a Markdown block, without "- ", section prefix or trailing tag.
inline std::vector<std::string> bullet_contents(std::string_view block) {
  std::vector<std::string> out;
  std::istringstream in{std::string(block)};
  for (std::string line; std::getline(in, line);) {
    std::string_view s = detail::trim_view(line);
    if (s.substr(0, 2) != "- ") continue;
    s.remove_prefix(2);
    detail::strip_leading_prefix(s);
    detail::strip_trailing_tag(s);
    if (!s.empty()) out.emplace_back(s);
  }
  return out;
}

}  // namespace mock_detail

inline constexpr std::string_view kMockModelName = "mock-deterministic-v1";

class MockLlm : public LlmClient {
 public:
  std::string model() const override { return std::string(kMockModelName); }

  std::string complete(const ChatRequest& request) override {
    const std::string_view user = mock_detail::original_user(request.user);
    switch (request.stage) {
      case Stage::router: return route(user);
      case Stage::data: return data(user);
      case Stage::expansion: return expansion(user);
      case Stage::expert: return expert(user);
      case Stage::integration: return integration(user);
      case Stage::synthesis: return synthesis(user);
      case Stage::distillation: return distillation(user);
    }
    return "{}";
  }

  static std::string route(std::string_view question) {
    using mock_detail::has_any;
    static const std::regex date_re(R"(\d{4}-\d{2}-\d{2})");
    const std::string q(detail::trim_view(question));
    const std::string lq = mock_detail::lower(q);
    const bool has_dates = std::regex_search(q, date_re);
    const bool wants_reasoning =
        has_any(lq, {"why", "explain", "cause", "mechanism", "optimiz", "recommend", "suggest", "root", "strateg",
                     "adjust", "factor", "indicate", "interpret", "improve", "mitigat", "propose"});
    nlohmann::ordered_json j;
    std::string route;
    if (has_dates && wants_reasoning) {
      route = "data_and_knowledge";
    } else if (has_dates) {
      route = "data_only";
    } else {
      route = "knowledge_only";
    }
    j["route"] = route;
    j["data_query"] = has_dates ? q : "";
    if (route == "data_only") {
      j["knowledge_query"] = "";
    } else {
      static const std::regex range_re(
          R"((from|between|for the period|using (the )?(records|data|dataset) from)?\s*\d{4}-\d{2}-\d{2}\s+(to|and)\s+\d{4}-\d{2}-\d{2},?\s*)",
          std::regex::icase);
      std::string topic = std::regex_replace(q, range_re, "");
      topic = mock_detail::strip_sentence_end(topic);
      j["knowledge_query"] = has_dates ? "For stationary ESS, " + topic + "?" : q;
    }
    return j.dump();
  }

  static std::string data(std::string_view user) {
    const std::string_view context =
        mock_detail::between(user, "retrieved records from the database: ", "\n- Now here is the user question:");
    struct Cell {
      std::string date;
      std::size_t pack;
      double value;
    };
    std::vector<Cell> v1, v2, h;
    std::string date;
    std::istringstream in{std::string(context)};
    for (std::string line; std::getline(in, line);) {
      if (line.rfind("# Record ", 0) == 0) {
        date = line.substr(9);
        continue;
      }
      auto collect = [&](std::string_view label, std::vector<Cell>& into) {
        const std::string prefix = "| " + std::string(label) + " |";
        if (line.rfind(prefix, 0) != 0) return;
        std::istringstream cells(line.substr(prefix.size()));
        std::size_t pack = 0;
        for (std::string cell; std::getline(cells, cell, '|');) {
          if (detail::trim_view(cell).empty()) continue;
          ++pack;
          try {
            into.push_back({date, pack, std::stod(cell)});
          } catch (const std::exception&) {
          }
        }
      };
      collect("V_row1 (worst-case spread)", v1);
      collect("V_row2 (average spread)", v2);
      collect("H (SOH)", h);
    }
    nlohmann::ordered_json j;
    std::vector<std::string> bullets;
    if (v1.empty()) {
      j["data_analysis"] = "The retrieved context holds no V, T or H matrices.";
      j["data_summary"] = "No inconsistency matrices were present in the retrieved records.";
      bullets = {"- No voltage, thermal or health matrices were available for this request.",
                 "- Confirm the record store covers the requested dates.",
                 "- Rebuild records from raw logs before repeating the analysis."};
    } else {
      const auto worst = *std::max_element(v1.begin(), v1.end(), [](const Cell& a, const Cell& b) {
        return a.value < b.value;
      });
      double mean2 = 0.0;
      for (const auto& c : v2) mean2 += c.value;
      mean2 = v2.empty() ? 0.0 : mean2 / static_cast<double>(v2.size());
      std::ostringstream analysis;
      analysis << "Scanned " << v1.size() << " pack-operation columns. Largest V_row1 is " << mock_detail::fmt(worst.value)
               << " V (pack " << worst.pack << ", " << worst.date << "); mean V_row2 is " << mock_detail::fmt(mean2)
               << " V.";
      bullets.push_back("- Pack " + std::to_string(worst.pack) + " shows the largest worst-case voltage spread, " +
                        mock_detail::fmt(worst.value) + " V on " + worst.date + ".");
      bullets.push_back("- Mean voltage spread across the retrieved records is " + mock_detail::fmt(mean2) + " V.");
      if (!h.empty()) {
        const auto low = *std::min_element(h.begin(), h.end(), [](const Cell& a, const Cell& b) {
          return a.value < b.value;
        });
        analysis << " Lowest SOH is " << mock_detail::fmt(low.value) << " (pack " << low.pack << ").";
        bullets.push_back("- Lowest SOH is " + mock_detail::fmt(low.value) + " on pack " + std::to_string(low.pack) +
                          ", so schedule balancing and inspection there first.");
      } else {
        bullets.push_back("- Prioritize balancing and inspection for pack " + std::to_string(worst.pack) + ".");
      }
      j["data_analysis"] = analysis.str();
      j["data_summary"] = "Pack " + std::to_string(worst.pack) +
                          " carries the worst voltage spread in the retrieved window and should be inspected first.";
    }
    std::string brief;
    for (std::size_t i = 0; i < bullets.size(); ++i) brief += (i ? "\n" : "") + bullets[i];
    j["data_brief"] = brief;
    return j.dump();
  }

  static std::string expansion(std::string_view question) {
    const std::string topic = mock_detail::truncate_words(
        mock_detail::strip_sentence_end(std::string(detail::trim_view(question))), 14);
    nlohmann::json j = nlohmann::json::array();
    j.push_back("Root causes behind: " + topic);
    j.push_back("System impacts of: " + topic);
    j.push_back("Mitigation strategies for: " + topic);
    return j.dump();
  }

  static std::string expert(std::string_view question) {
    const std::string lq = mock_detail::lower(question);
    std::string focus = "cell inconsistency";
    if (lq.find("therm") != std::string::npos || lq.find("temperat") != std::string::npos) {
      focus = "thermal non-uniformity";
    } else if (lq.find("soh") != std::string::npos || lq.find("health") != std::string::npos ||
               lq.find("aging") != std::string::npos) {
      focus = "state-of-health dispersion";
    } else if (lq.find("voltage") != std::string::npos) {
      focus = "voltage inconsistency";
    }
    return "Background: " + focus +
           " in stationary storage grows from manufacturing spread and uneven operating stress.\n"
           "Root causes: parameter dispersion, uneven cooling and contact resistance differences.\n"
           "Recommendations: balance regularly, verify coolant distribution and track the worst packs.";
  }

  static std::string integration(std::string_view user) {
    const std::string_view snippets =
        mock_detail::between(user, "Retrieved knowledge snippets (RAG results):\n", "\n\nStandalone expert answer:");
    std::vector<std::string> keys;
    double best = -1.0;
    std::istringstream in{std::string(snippets)};
    static const std::regex head_re(R"(^\[\d+\] .*score=(-?[0-9.eE+-]+))");
    for (std::string line; std::getline(in, line);) {
      std::smatch m;
      if (std::regex_search(line, m, head_re)) best = std::max(best, std::stod(m[1].str()));
      if (line.rfind("Key: ", 0) == 0) keys.push_back(mock_detail::strip_sentence_end(line.substr(5)));
    }
    std::string relevance = "low";
    if (!keys.empty() && best >= 0.45) {
      relevance = "high";
    } else if (!keys.empty() && best >= 0.25) {
      relevance = "medium";
    }
    const bool use_rag = relevance != "low";
    auto from_key = [&](std::size_t i, std::string_view fallback) {
      return use_rag && i < keys.size() ? mock_detail::truncate_words(keys[i], 16) : std::string(fallback);
    };
    const std::string rag_tag = relevance == "high" ? "[RAG]" : "[RAG][LLM]";
    std::vector<std::string> bullets = {
        "- [Mechanism] " + from_key(0, "Parameter dispersion between cells widens under uneven current and temperature") +
            " " + (use_rag && !keys.empty() ? rag_tag : "[LLM]"),
        "- [Cause] " + from_key(1, "Uneven cooling and contact resistance drive divergent cell aging") + " " +
            (use_rag && keys.size() > 1 ? rag_tag : "[LLM]"),
        "- [Mitigation] Balance packs regularly, verify coolant distribution and inspect the worst packs first [LLM]"};
    nlohmann::ordered_json j;
    j["relevance"] = relevance;
    j["rag_view"] = use_rag ? "Retrieved slices describe: " + mock_detail::truncate_words(keys.front(), 20) + "."
                            : "Retrieved slices add little to the question.";
    j["llm_view"] = "Expert reasoning stresses balancing, cooling checks and tracking of the worst packs.";
    std::string summary;
    for (std::size_t i = 0; i < bullets.size(); ++i) summary += (i ? "\n" : "") + bullets[i];
    j["summary"] = summary;
    return j.dump();
  }

  static std::string synthesis(std::string_view user) {
    const auto data_bullets = mock_detail::bullet_contents(mock_detail::between(user, "Data brief:\n", "\n\nKnowledge synthesis:"));
    const auto know_bullets =
        mock_detail::bullet_contents(mock_detail::between(user, "Knowledge synthesis:\n", "\n\nUser question:"));
    auto pick = [](const std::vector<std::string>& v, std::string_view fallback) {
      return v.empty() ? std::string(fallback) : mock_detail::truncate_words(v.front(), 20);
    };
    const std::string answer =
        "- [Data] " + pick(data_bullets, "No data findings were available for this question.") + "\n" +
        "- [Knowledge] " + pick(know_bullets, "No knowledge findings were available for this question.") + "\n" +
        "- [Integrated] Inspect the flagged packs first and apply the listed mitigations during the next maintenance window.";
    nlohmann::ordered_json j;
    j["answer"] = answer;
    return j.dump();
  }

  static std::string distillation(std::string_view article) {
    std::string out;
    std::istringstream in{std::string(article)};
    std::string paragraph;
    auto flush = [&] {
      if (paragraph.empty()) return;
      const auto stop = paragraph.find(". ");
      const std::string title = stop == std::string::npos ? paragraph : paragraph.substr(0, stop + 1);
      out += "# " + title + "\n\n" + paragraph + "\n\n";
      paragraph.clear();
    };
    for (std::string line; std::getline(in, line);) {
      const auto t = detail::trim_view(line);
      if (t.empty()) {
        flush();
      } else {
        paragraph += (paragraph.empty() ? "" : " ") + std::string(t);
      }
    }
    flush();
    return out;
  }
};

}  // namespace bessom
