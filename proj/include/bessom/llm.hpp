#pragma once

// Chat-completion client contract shared by the agents, plus prompt template
// rendering and strict JSON extraction from model output.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bessom/error.hpp"
#include "json.hpp"

namespace bessom {

enum class Stage { router, data, expansion, expert, integration, synthesis, distillation };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::router: return "router";
    case Stage::data: return "data";
    case Stage::expansion: return "expansion";
    case Stage::expert: return "expert";
    case Stage::integration: return "integration";
    case Stage::synthesis: return "synthesis";
    case Stage::distillation: return "distillation";
  }
  return "unknown";
}

struct ChatRequest {
  Stage stage = Stage::router;
  std::string system;
  std::string user;
  double temperature = 0.0;
};

/// Implementations must be safe to call from several threads at once.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Returns the assistant message text; throws TransportError when the call fails for good.
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string model() const = 0;
};

// ---------------------------------------------------------------------------
// Prompt templates

struct PromptTemplate {
  std::string_view system;
  std::string_view user;
};

inline constexpr std::string_view kUserSeparator = "=== user ===";

/// Splits a template file into its system part and user part at the separator line.
inline PromptTemplate split_prompt(std::string_view text) {
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    if (text.substr(pos, eol - pos) == kUserSeparator) {
      std::string_view system = text.substr(0, pos);
      while (!system.empty() && (system.back() == '\n' || system.back() == '\r')) system.remove_suffix(1);
      std::string_view user = eol < text.size() ? text.substr(eol + 1) : std::string_view{};
      while (!user.empty() && (user.back() == '\n' || user.back() == '\r')) user.remove_suffix(1);
      return {system, user};
    }
    pos = eol + 1;
  }
  throw ValidationError("prompt template has no '" + std::string(kUserSeparator) + "' line");
}

using PromptVars = std::vector<std::pair<std::string_view, std::string_view>>;

/// Single-pass substitution of `{name}` placeholders; other braces are left alone
/// and substituted values are never rescanned.
inline std::string fill_template(std::string_view tmpl, const PromptVars& vars) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      bool replaced = false;
      for (const auto& [name, value] : vars) {
        if (tmpl.compare(i + 1, name.size(), name) == 0 && i + 1 + name.size() < tmpl.size() &&
            tmpl[i + 1 + name.size()] == '}') {
          out += value;
          i += name.size() + 2;
          replaced = true;
          break;
        }
      }
      if (replaced) continue;
    }
    out += tmpl[i++];
  }
  return out;
}

inline ChatRequest make_request(Stage stage, std::string_view prompt_file_text, const PromptVars& vars) {
  const auto t = split_prompt(prompt_file_text);
  return {stage, std::string(t.system), fill_template(t.user, vars), 0.0};
}

// ---------------------------------------------------------------------------
// Strict JSON extraction

/// Parses model output that must be exactly one JSON value of the expected kind,
/// optionally surrounded by whitespace. Code fences and trailing text are rejected.
inline nlohmann::json parse_model_json(std::string_view raw, bool expect_array = false) {
  std::size_t b = 0, e = raw.size();
  while (b < e && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(raw[e - 1]))) --e;
  const std::string_view body = raw.substr(b, e - b);
  if (body.find("```") != std::string_view::npos) throw ParseError("output wrapped in a code fence");
  if (body.empty()) throw ParseError("empty output");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("output is not valid JSON: ") + ex.what());
  }
  if (expect_array ? !j.is_array() : !j.is_object()) {
    throw ParseError(expect_array ? "output is not a JSON array" : "output is not a JSON object");
  }
  return j;
}

inline std::string required_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw ParseError(std::string("missing string field '") + key + "'");
  return j[key].get<std::string>();
}

// ---------------------------------------------------------------------------
// Stage audit trail

struct StageAttempt {
  std::string system;
  std::string user;
  std::string response;
  /// Transport, parse or validation problem of this attempt; empty when it succeeded.
  std::string error;
};

struct StageTrace {
  Stage stage = Stage::router;
  std::vector<StageAttempt> attempts;
  bool degraded = false;
  std::vector<std::string> notes;
  double elapsed_ms = 0.0;
};

inline constexpr std::string_view kRepairObject = "Return only the single JSON object, no code fences.";
inline constexpr std::string_view kRepairArray = "Return only the single JSON array, no code fences.";

/// Outcome of a stage that expects structured output and may take one repair-retry.
template <class T>
struct StageResult {
  std::optional<T> value;
  /// Problems left after the final attempt (validation violations or parse error).
  std::vector<std::string> problems;
  bool degraded = false;
};

/// Runs `request`, parses with `parse` (throws ParseError) and checks with
/// `check` (returns a list of problems). One repair-retry follows a parse
/// failure or a failed check, with the problems and `repair_line` appended to
/// the user message. After the retry the last parsed value, if any, is
/// returned flagged as degraded.
template <class T, class Parse, class Check>
StageResult<T> run_structured_stage(LlmClient& llm, const ChatRequest& request, Parse parse, Check check,
                                    StageTrace& trace, std::string_view repair_line = kRepairObject) {
  StageResult<T> result;
  ChatRequest current = request;
  for (int attempt = 0; attempt < 2; ++attempt) {
    StageAttempt a{current.system, current.user, {}, {}};
    std::vector<std::string> problems;
    try {
      a.response = llm.complete(current);
    } catch (const TransportError& ex) {
      a.error = ex.what();
      trace.attempts.push_back(std::move(a));
      trace.degraded = true;
      result.degraded = true;
      result.problems = {trace.attempts.back().error};
      return result;
    }
    try {
      T value = parse(a.response);
      problems = check(value);
      result.value = std::move(value);
    } catch (const ParseError& ex) {
      problems = {ex.what()};
    }
    if (problems.empty()) {
      trace.attempts.push_back(std::move(a));
      result.problems.clear();
      return result;
    }
    for (std::size_t i = 0; i < problems.size(); ++i) a.error += (i ? "; " : "") + problems[i];
    trace.attempts.push_back(std::move(a));
    result.problems = std::move(problems);
    if (attempt == 0) {
      current.user = request.user + "\n\nYour previous output was rejected: " + trace.attempts.back().error + "\n" +
                     std::string(repair_line);
    }
  }
  trace.degraded = true;
  result.degraded = true;
  return result;
}

/// Plain-text stage (no JSON); transport failure leaves the value empty and marks the trace degraded.
inline std::optional<std::string> run_text_stage(LlmClient& llm, const ChatRequest& request, StageTrace& trace) {
  StageAttempt a{request.system, request.user, {}, {}};
  try {
    a.response = llm.complete(request);
  } catch (const TransportError& ex) {
    a.error = ex.what();
    trace.attempts.push_back(std::move(a));
    trace.degraded = true;
    return std::nullopt;
  }
  std::string text = a.response;
  trace.attempts.push_back(std::move(a));
  return text;
}

}  // namespace bessom
