#pragma once

// Structural checks for Markdown bullet answers: bullet count, per-bullet word
// limit, single sentence, leading section prefixes and terminal provenance tags.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace bessom {

enum class TagMode { not_required, required };

struct BulletRules {
  std::size_t min_n = 3;
  std::size_t max_n = 5;
  /// Each bullet must have fewer content words than this.
  std::size_t word_limit = 25;
  TagMode tags = TagMode::not_required;
  /// Allowed leading prefixes such as "[Mechanism]"; empty means no prefix rule.
  std::vector<std::string> prefixes;
  /// When > 0, each prefix must occur between per_prefix_min and per_prefix_max times.
  std::size_t per_prefix_min = 0;
  std::size_t per_prefix_max = 0;
};

/// Bounds used for the data brief and the synthesized answer.
inline BulletRules data_brief_rules() { return {3, 5, 25, TagMode::not_required, {}, 0, 0}; }

inline BulletRules knowledge_summary_rules() {
  return {3, 6, 25, TagMode::required, {"[Mechanism]", "[Cause]", "[Mitigation]"}, 1, 2};
}

inline BulletRules synthesis_rules() { return {3, 5, 25, TagMode::not_required, {"[Data]", "[Knowledge]", "[Integrated]"}, 0, 0}; }

struct BulletViolation {
  /// 1-based bullet index; 0 for list-level findings.
  std::size_t index = 0;
  std::string rule;
  std::string detail;
};

struct BulletReport {
  bool valid = true;
  std::size_t bullet_count = 0;
  std::vector<BulletViolation> violations;
  std::vector<std::string> bullets;
};

inline constexpr std::string_view kProvenanceTags[] = {"[RAG][LLM]", "[RAG]", "[LLM]"};
inline constexpr std::string_view kStructuralPrefixes[] = {"[Data]",      "[Knowledge]", "[Integrated]",
                                                          "[Mechanism]", "[Cause]",     "[Mitigation]"};

namespace detail {

inline std::string_view trim_view(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Removes one trailing provenance tag; returns the tag or an empty view.
inline std::string_view strip_trailing_tag(std::string_view& s) {
  s = trim_view(s);
  for (auto tag : kProvenanceTags) {
    if (s.size() >= tag.size() && s.substr(s.size() - tag.size()) == tag) {
      s.remove_suffix(tag.size());
      s = trim_view(s);
      return tag;
    }
  }
  return {};
}

inline bool ends_with_bracket_token(std::string_view s) {
  s = trim_view(s);
  if (s.empty() || s.back() != ']') return false;
  const auto open = s.rfind('[');
  return open != std::string_view::npos && s.find(' ', open) == std::string_view::npos;
}

inline std::string_view strip_leading_prefix(std::string_view& s) {
  s = trim_view(s);
  for (auto p : kStructuralPrefixes) {
    if (s.substr(0, p.size()) == p) {
      s.remove_prefix(p.size());
      s = trim_view(s);
      return p;
    }
  }
  return {};
}

inline std::size_t count_words(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

/// A sentence terminator followed by whitespace and an upper-case letter inside the bullet.
inline bool has_multiple_sentences(std::string_view s) {
  s = trim_view(s);
  for (std::size_t i = 0; i + 2 < s.size(); ++i) {
    if ((s[i] == '.' || s[i] == '!' || s[i] == '?') && std::isspace(static_cast<unsigned char>(s[i + 1]))) {
      std::size_t j = i + 1;
      while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && std::isupper(static_cast<unsigned char>(s[j]))) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Words of a bullet after removing "- ", a leading section prefix and a trailing tag.
inline std::size_t bullet_content_words(std::string_view bullet) {
  std::string_view s = detail::trim_view(bullet);
  if (s.substr(0, 2) == "- ") s.remove_prefix(2);
  detail::strip_leading_prefix(s);
  detail::strip_trailing_tag(s);
  return detail::count_words(s);
}

/// Total: every input yields a report, never an exception.
inline BulletReport validate_bullets(std::string_view text, const BulletRules& rules) {
  BulletReport r;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string_view line = detail::trim_view(text.substr(pos, eol - pos));
    ++line_no;
    pos = eol + 1;
    if (line.empty()) continue;
    if (line.substr(0, 2) == "- ") {
      r.bullets.emplace_back(line);
    } else {
      r.violations.push_back({0, "extra_text", "line " + std::to_string(line_no) + " is not a '- ' bullet"});
    }
  }
  r.bullet_count = r.bullets.size();
  if (r.bullet_count < rules.min_n || r.bullet_count > rules.max_n) {
    r.violations.push_back({0, "count",
                            std::to_string(r.bullet_count) + " bullets, expected " + std::to_string(rules.min_n) +
                                "-" + std::to_string(rules.max_n)});
  }

  std::map<std::string, std::size_t, std::less<>> prefix_counts;
  for (std::size_t i = 0; i < r.bullets.size(); ++i) {
    const std::size_t idx = i + 1;
    std::string_view s = std::string_view(r.bullets[i]).substr(2);

    const std::string_view prefix = detail::strip_leading_prefix(s);
    if (!rules.prefixes.empty()) {
      bool allowed = false;
      for (const auto& p : rules.prefixes) allowed = allowed || p == prefix;
      if (!allowed) {
        r.violations.push_back({idx, "prefix", prefix.empty() ? "missing section prefix"
                                                              : "prefix " + std::string(prefix) + " not allowed"});
      } else {
        ++prefix_counts[std::string(prefix)];
      }
    }

    const std::string_view tag = detail::strip_trailing_tag(s);
    if (rules.tags == TagMode::required) {
      if (tag.empty()) {
        r.violations.push_back({idx, detail::ends_with_bracket_token(s) ? "bad_tag" : "missing_tag",
                                "bullet must end with exactly one of [RAG], [LLM], [RAG][LLM]"});
      } else if (detail::ends_with_bracket_token(s)) {
        r.violations.push_back({idx, "bad_tag", "more than one terminal tag"});
      }
    }

    const std::size_t words = detail::count_words(s);
    if (words == 0) {
      r.violations.push_back({idx, "empty", "bullet has no content"});
    } else if (words >= rules.word_limit) {
      r.violations.push_back({idx, "word_limit",
                              std::to_string(words) + " words, limit is fewer than " + std::to_string(rules.word_limit)});
    }
    if (detail::has_multiple_sentences(s)) r.violations.push_back({idx, "single_sentence", "bullet has several sentences"});
  }

  if (rules.per_prefix_min > 0 || rules.per_prefix_max > 0) {
    for (const auto& p : rules.prefixes) {
      const auto it = prefix_counts.find(p);
      const std::size_t n = it == prefix_counts.end() ? 0 : it->second;
      if (n < rules.per_prefix_min || n > rules.per_prefix_max) {
        r.violations.push_back({0, "prefix",
                                p + " appears " + std::to_string(n) + " times, expected " +
                                    std::to_string(rules.per_prefix_min) + "-" + std::to_string(rules.per_prefix_max)});
      }
    }
  }
  r.valid = r.violations.empty();
  return r;
}

inline std::vector<std::string> describe(const BulletReport& r) {
  std::vector<std::string> out;
  for (const auto& v : r.violations) {
    out.push_back((v.index ? "bullet " + std::to_string(v.index) + ": " : std::string()) + v.rule + " (" + v.detail + ")");
  }
  return out;
}

}  // namespace bessom
