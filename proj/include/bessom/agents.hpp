#pragma once

// Query answering: route the question, run the data and/or knowledge branch,
// synthesize, and keep an audit of every prompt sent and every reply received.
// Any single stage failing degrades the answer instead of aborting it.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <future>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bessom/bullets.hpp"
#include "bessom/calendar.hpp"
#include "bessom/knowledge.hpp"
#include "bessom/llm.hpp"
#include "bessom/prompt_texts.hpp"
#include "bessom/records.hpp"
#include "json.hpp"

namespace bessom {

enum class Route { data_only, knowledge_only, data_and_knowledge };

inline std::string_view to_string(Route r) {
  switch (r) {
    case Route::data_only: return "data_only";
    case Route::knowledge_only: return "knowledge_only";
    case Route::data_and_knowledge: return "data_and_knowledge";
  }
  return "unknown";
}

inline Route route_from_string(std::string_view s) {
  if (s == "data_only") return Route::data_only;
  if (s == "knowledge_only") return Route::knowledge_only;
  if (s == "data_and_knowledge") return Route::data_and_knowledge;
  throw ParseError("unknown route '" + std::string(s) + "'");
}

inline bool wants_data(Route r) { return r != Route::knowledge_only; }
inline bool wants_knowledge(Route r) { return r != Route::data_only; }

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline bool is_blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Routing

struct RoutedQuery {
  Route route = Route::data_and_knowledge;
  std::string data_query;
  std::string knowledge_query;
  std::optional<Date> date_from;
  std::optional<Date> date_to;
};

struct RouteRun {
  RoutedQuery query;
  bool degraded = false;
  StageTrace trace{Stage::router, {}, false, {}, 0.0};
};

namespace detail {

/// Date range spanned by the ISO dates in `text`; an impossible date is reported, not guessed.
inline void attach_dates(RoutedQuery& q, std::string_view primary, std::string_view fallback, StageTrace& trace) {
  for (std::string_view text : {primary, fallback}) {
    try {
      const auto dates = extract_iso_dates(text);
      if (dates.empty()) continue;
      q.date_from = *std::min_element(dates.begin(), dates.end());
      q.date_to = *std::max_element(dates.begin(), dates.end());
      return;
    } catch (const ParseError& e) {
      trace.notes.push_back(std::string("date extraction failed: ") + e.what());
      trace.degraded = true;
      return;
    }
  }
}

}  // namespace detail

inline RouteRun route(const std::string& question, LlmClient& llm) {
  if (detail::is_blank(question)) throw ValidationError("empty question");
  RouteRun run;
  const auto t0 = detail::Clock::now();
  const auto request = make_request(Stage::router, prompt_text::router, {{"question", question}});
  auto parsed = run_structured_stage<RoutedQuery>(
      llm, request,
      [](const std::string& raw) {
        const auto j = parse_model_json(raw);
        RoutedQuery q;
        q.route = route_from_string(required_string(j, "route"));
        q.data_query = required_string(j, "data_query");
        q.knowledge_query = required_string(j, "knowledge_query");
        return q;
      },
      [](const RoutedQuery&) { return std::vector<std::string>{}; }, run.trace);

  if (parsed.value && !parsed.degraded) {
    run.query = std::move(*parsed.value);
    if (run.query.route == Route::data_only) run.query.knowledge_query.clear();
    if (run.query.route == Route::knowledge_only) run.query.data_query.clear();
    if (wants_data(run.query.route) && detail::is_blank(run.query.data_query)) run.query.data_query = question;
    if (wants_knowledge(run.query.route) && detail::is_blank(run.query.knowledge_query)) {
      run.query.knowledge_query = question;
    }
  } else {
    run.query = {Route::data_and_knowledge, question, question, std::nullopt, std::nullopt};
    run.trace.notes.push_back("routing failed; falling back to data_and_knowledge with the full question");
    run.trace.degraded = true;
  }
  if (wants_data(run.query.route)) detail::attach_dates(run.query, run.query.data_query, question, run.trace);
  run.degraded = run.trace.degraded;
  run.trace.elapsed_ms = detail::ms_since(t0);
  return run;
}

// ---------------------------------------------------------------------------
// Data branch

struct DataAgentOutput {
  std::string data_analysis;
  std::string data_summary;
  std::string data_brief;
  bool no_records = false;
};

struct DataAgentRun {
  std::optional<DataAgentOutput> output;
  bool degraded = false;
  Date from;
  Date to;
  std::size_t records_used = 0;
  std::vector<std::string> violations;
  StageTrace trace{Stage::data, {}, false, {}, 0.0};
};

inline DataAgentOutput no_records_output(Date from, Date to) {
  const std::string range = from.iso() + " to " + to.iso();
  return {"No V, T or H matrices exist in the record store for " + range + ".",
          "No inconsistency records are available for " + range + ", so no analysis was performed.",
          "- No inconsistency records exist for " + range + ".\n"
          "- Voltage, thermal and health analysis needs at least one recorded day.\n"
          "- Build records for these dates from the raw logs, then repeat the query.",
          true};
}

inline DataAgentRun run_data_agent(const RoutedQuery& rq, const RecordSource& records, LlmClient& llm,
                                   int default_window_days = 30) {
  DataAgentRun run;
  const auto t0 = detail::Clock::now();
  if (rq.date_from && rq.date_to) {
    run.from = *rq.date_from;
    run.to = *rq.date_to;
  } else {
    const Date last = records.latest_date().value_or(date_of(0));
    run.to = last;
    run.from = last.plus_days(-(default_window_days - 1));
    run.trace.notes.push_back("no date range in the data query; using " + run.from.iso() + " to " + run.to.iso());
  }
  const auto entries = records.query_range(run.from, run.to);
  run.records_used = entries.size();
  if (entries.empty()) {
    run.output = no_records_output(run.from, run.to);
    run.trace.notes.push_back(records.size() == 0 ? "record store is empty" : "no records in the requested range");
    run.trace.elapsed_ms = detail::ms_since(t0);
    return run;
  }
  const std::string context = render_markdown(entries);
  const auto request =
      make_request(Stage::data, prompt_text::data_agent, {{"context", context}, {"question", rq.data_query}});
  auto parsed = run_structured_stage<DataAgentOutput>(
      llm, request,
      [](const std::string& raw) {
        const auto j = parse_model_json(raw);
        return DataAgentOutput{required_string(j, "data_analysis"), required_string(j, "data_summary"),
                               required_string(j, "data_brief"), false};
      },
      [](const DataAgentOutput& o) { return describe(validate_bullets(o.data_brief, data_brief_rules())); },
      run.trace);
  run.output = std::move(parsed.value);
  run.degraded = parsed.degraded;
  if (parsed.degraded) run.violations = parsed.problems;
  run.trace.elapsed_ms = detail::ms_since(t0);
  return run;
}

// ---------------------------------------------------------------------------
// Knowledge branch

enum class Relevance { high, medium, low };

inline std::string_view to_string(Relevance r) {
  switch (r) {
    case Relevance::high: return "high";
    case Relevance::medium: return "medium";
    case Relevance::low: return "low";
  }
  return "low";
}

inline Relevance relevance_from_string(std::string_view s) {
  if (s == "high") return Relevance::high;
  if (s == "medium") return Relevance::medium;
  if (s == "low") return Relevance::low;
  throw ParseError("unknown relevance '" + std::string(s) + "'");
}

/// How expert reasoning and retrieved evidence are weighed for a relevance level.
inline std::string_view integration_policy(Relevance r) {
  switch (r) {
    case Relevance::high: return "evidence-centric";
    case Relevance::medium: return "merged";
    case Relevance::low: return "reasoning-centric";
  }
  return "reasoning-centric";
}

struct KnowledgeAgentOutput {
  Relevance relevance = Relevance::low;
  std::string rag_view;
  std::string llm_view;
  std::string summary;
};

struct RetrievedSlice {
  RetrievalHit hit;
  KnowledgeSlice slice;
};

struct KnowledgeAgentRun {
  std::optional<KnowledgeAgentOutput> output;
  bool degraded = false;
  std::vector<std::string> queries;
  std::vector<RetrievedSlice> retrieved;
  std::vector<std::string> violations;
  std::vector<std::string> notes;
  StageTrace expansion_trace{Stage::expansion, {}, false, {}, 0.0};
  StageTrace expert_trace{Stage::expert, {}, false, {}, 0.0};
  StageTrace integration_trace{Stage::integration, {}, false, {}, 0.0};
  double retrieval_ms = 0.0;
};

inline std::string render_snippets(const std::vector<RetrievedSlice>& retrieved) {
  if (retrieved.empty()) return "(no snippets retrieved)";
  std::string out;
  for (std::size_t i = 0; i < retrieved.size(); ++i) {
    char score[32];
    std::snprintf(score, sizeof score, "%.4f", retrieved[i].hit.fused_score);
    out += (i ? "\n\n" : "") + std::string("[") + std::to_string(i + 1) + "] id=" + retrieved[i].slice.id +
           " score=" + score + "\nKey: " + retrieved[i].slice.key + "\n" + retrieved[i].slice.body;
  }
  return out;
}

inline KnowledgeAgentRun run_knowledge_agent(const RoutedQuery& rq, KnowledgeSource& knowledge, LlmClient& llm,
                                             std::size_t top_k = 5, bool include_original = true) {
  KnowledgeAgentRun run;
  const std::string& question = rq.knowledge_query;

  auto t0 = detail::Clock::now();
  auto expansion = expand_query(question, llm, include_original);
  run.queries = expansion.queries;
  run.expansion_trace = std::move(expansion.trace);
  run.expansion_trace.elapsed_ms = detail::ms_since(t0);
  run.degraded = expansion.degraded;

  t0 = detail::Clock::now();
  if (knowledge.size() == 0) {
    run.notes.push_back("knowledge index is empty; answering from expert reasoning only");
    run.degraded = true;
  } else {
    for (auto& hit : knowledge.search(run.queries, top_k)) {
      auto slice = knowledge.slice(hit.slice_id);
      if (slice) run.retrieved.push_back({std::move(hit), std::move(*slice)});
    }
  }
  run.retrieval_ms = detail::ms_since(t0);

  t0 = detail::Clock::now();
  const auto expert = run_text_stage(
      llm, make_request(Stage::expert, prompt_text::expert_reasoning, {{"question", question}}), run.expert_trace);
  run.expert_trace.elapsed_ms = detail::ms_since(t0);
  if (!expert) run.degraded = true;

  t0 = detail::Clock::now();
  const std::string snippets = render_snippets(run.retrieved);
  const std::string expert_text = expert.value_or("(expert answer unavailable)");
  const auto request = make_request(Stage::integration, prompt_text::knowledge_integration,
                                    {{"question", question}, {"snippets", snippets}, {"expert_answer", expert_text}});
  auto parsed = run_structured_stage<KnowledgeAgentOutput>(
      llm, request,
      [](const std::string& raw) {
        const auto j = parse_model_json(raw);
        return KnowledgeAgentOutput{relevance_from_string(required_string(j, "relevance")),
                                    required_string(j, "rag_view"), required_string(j, "llm_view"),
                                    required_string(j, "summary")};
      },
      [](const KnowledgeAgentOutput& o) { return describe(validate_bullets(o.summary, knowledge_summary_rules())); },
      run.integration_trace);
  run.integration_trace.elapsed_ms = detail::ms_since(t0);
  run.output = std::move(parsed.value);
  if (parsed.degraded) {
    run.degraded = true;
    run.violations = parsed.problems;
  }
  if (run.output && run.retrieved.empty() && run.output->relevance != Relevance::low) {
    run.output->relevance = Relevance::low;
    run.notes.push_back("no snippets were retrieved; relevance forced to low");
  }
  return run;
}

// ---------------------------------------------------------------------------
// Synthesis

struct SynthesisRun {
  std::optional<std::string> answer;
  bool degraded = false;
  std::vector<std::string> violations;
  StageTrace trace{Stage::synthesis, {}, false, {}, 0.0};
};

inline SynthesisRun run_synthesizer(const std::string& question, const std::string& context,
                                    const DataAgentOutput* data_out, const KnowledgeAgentOutput* knowledge_out,
                                    LlmClient& llm) {
  if (!data_out && !knowledge_out) throw ValidationError("synthesis needs at least one branch output");
  SynthesisRun run;
  const auto t0 = detail::Clock::now();
  const std::string none = "(not available)";
  const auto request = make_request(Stage::synthesis, prompt_text::synthesizer,
                                    {{"context", context.empty() ? none : context},
                                     {"data_summary", data_out ? data_out->data_summary : none},
                                     {"data_brief", data_out ? data_out->data_brief : none},
                                     {"knowledge_summary", knowledge_out ? knowledge_out->summary : none},
                                     {"question", question}});
  auto parsed = run_structured_stage<std::string>(
      llm, request, [](const std::string& raw) { return required_string(parse_model_json(raw), "answer"); },
      [](const std::string& answer) { return describe(validate_bullets(answer, synthesis_rules())); }, run.trace);
  run.answer = std::move(parsed.value);
  if (parsed.degraded) {
    run.degraded = true;
    run.violations = parsed.problems;
  }
  run.trace.elapsed_ms = detail::ms_since(t0);
  return run;
}

// ---------------------------------------------------------------------------
// Full answer

struct AgentOptions {
  std::size_t top_k = 5;
  bool include_original = true;
  int default_window_days = 30;
  double deadline_s = 120.0;
};

struct AgentDeps {
  LlmClient& llm;
  const RecordSource* records = nullptr;
  KnowledgeSource* knowledge = nullptr;
  AgentOptions options{};
};

struct Audit {
  RouteRun router;
  std::optional<DataAgentRun> data;
  std::optional<KnowledgeAgentRun> knowledge;
  std::optional<SynthesisRun> synthesis;
  std::vector<std::string> notes;
};

struct FinalAnswer {
  std::string question;
  Route route = Route::data_and_knowledge;
  std::vector<std::string> bullets;
  bool degraded = false;
  std::optional<std::string> data_summary;
  std::optional<std::string> knowledge_summary;
  std::optional<std::string> error;
  std::string model;
  Audit audit;
  /// Stage name and wall time in milliseconds, in pipeline order.
  std::vector<std::pair<std::string, double>> timings_ms;
};

namespace detail {

inline std::vector<std::string> bullet_lines(std::string_view text) {
  return validate_bullets(text, {0, std::numeric_limits<std::size_t>::max(), std::numeric_limits<std::size_t>::max(),
                                 TagMode::not_required, {}, 0, 0})
      .bullets;
}

}  // namespace detail

inline FinalAnswer answer(const std::string& question, AgentDeps deps) {
  const auto started = detail::Clock::now();
  const auto deadline = started + std::chrono::duration_cast<detail::Clock::duration>(
                                      std::chrono::duration<double>(deps.options.deadline_s));
  FinalAnswer fa;
  fa.question = question;
  fa.model = deps.llm.model();
  fa.audit.router = route(question, deps.llm);
  const RoutedQuery& rq = fa.audit.router.query;
  fa.route = rq.route;
  fa.degraded = fa.audit.router.degraded;
  fa.timings_ms.emplace_back("router", fa.audit.router.trace.elapsed_ms);

  auto data_branch = [&]() -> std::optional<DataAgentRun> {
    if (!deps.records) throw Error("no record store configured");
    return run_data_agent(rq, *deps.records, deps.llm, deps.options.default_window_days);
  };
  auto knowledge_branch = [&]() -> std::optional<KnowledgeAgentRun> {
    if (!deps.knowledge) throw Error("no knowledge index configured");
    return run_knowledge_agent(rq, *deps.knowledge, deps.llm, deps.options.top_k, deps.options.include_original);
  };

  std::future<std::optional<DataAgentRun>> data_future;
  std::future<std::optional<KnowledgeAgentRun>> knowledge_future;
  if (wants_data(rq.route)) data_future = std::async(std::launch::async, data_branch);
  if (wants_knowledge(rq.route)) knowledge_future = std::async(std::launch::async, knowledge_branch);

  // Joined in a fixed order so the audit does not depend on thread scheduling.
  if (data_future.valid()) {
    try {
      fa.audit.data = data_future.get();
    } catch (const std::exception& e) {
      fa.audit.notes.push_back(std::string("data branch failed: ") + e.what());
    }
  }
  if (knowledge_future.valid()) {
    try {
      fa.audit.knowledge = knowledge_future.get();
    } catch (const std::exception& e) {
      fa.audit.notes.push_back(std::string("knowledge branch failed: ") + e.what());
    }
  }

  const DataAgentOutput* data_out = nullptr;
  const KnowledgeAgentOutput* knowledge_out = nullptr;
  std::string context;
  if (fa.audit.data) {
    auto& d = *fa.audit.data;
    fa.timings_ms.emplace_back("data", d.trace.elapsed_ms);
    fa.degraded = fa.degraded || d.degraded;
    if (d.output) {
      data_out = &*d.output;
      fa.data_summary = d.output->data_summary;
      if (!d.output->no_records && deps.records) context = render_markdown(deps.records->query_range(d.from, d.to));
    }
  }
  if (fa.audit.knowledge) {
    auto& k = *fa.audit.knowledge;
    fa.timings_ms.emplace_back("expansion", k.expansion_trace.elapsed_ms);
    fa.timings_ms.emplace_back("retrieval", k.retrieval_ms);
    fa.timings_ms.emplace_back("expert", k.expert_trace.elapsed_ms);
    fa.timings_ms.emplace_back("integration", k.integration_trace.elapsed_ms);
    fa.degraded = fa.degraded || k.degraded;
    if (k.output) {
      knowledge_out = &*k.output;
      fa.knowledge_summary = k.output->summary;
    }
  }
  if (wants_data(rq.route) && !data_out) fa.degraded = true;
  if (wants_knowledge(rq.route) && !knowledge_out) fa.degraded = true;

  if (rq.route == Route::data_and_knowledge && data_out && knowledge_out) {
    if (detail::Clock::now() > deadline) {
      fa.audit.notes.push_back("deadline exceeded before synthesis; answering from the data branch");
      fa.degraded = true;
      fa.bullets = detail::bullet_lines(data_out->data_brief);
    } else {
      fa.audit.synthesis = run_synthesizer(question, context, data_out, knowledge_out, deps.llm);
      fa.timings_ms.emplace_back("synthesis", fa.audit.synthesis->trace.elapsed_ms);
      if (fa.audit.synthesis->answer) {
        fa.bullets = detail::bullet_lines(*fa.audit.synthesis->answer);
        fa.degraded = fa.degraded || fa.audit.synthesis->degraded;
      } else {
        fa.audit.notes.push_back("synthesis failed; answering from the data branch");
        fa.degraded = true;
        fa.bullets = detail::bullet_lines(data_out->data_brief);
      }
    }
  } else if (data_out) {
    fa.bullets = detail::bullet_lines(data_out->data_brief);
  } else if (knowledge_out) {
    fa.bullets = detail::bullet_lines(knowledge_out->summary);
  } else {
    fa.error = "no branch produced an answer";
    fa.degraded = true;
  }
  if (rq.route == Route::data_and_knowledge && (!data_out || !knowledge_out) && (data_out || knowledge_out)) {
    fa.audit.notes.push_back("one branch failed; answering from the remaining branch");
  }
  fa.timings_ms.emplace_back("total", detail::ms_since(started));
  return fa;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const StageTrace& t) {
  nlohmann::ordered_json j;
  j["stage"] = std::string(to_string(t.stage));
  j["degraded"] = t.degraded;
  j["notes"] = t.notes;
  auto attempts = nlohmann::ordered_json::array();
  for (const auto& a : t.attempts) {
    nlohmann::ordered_json aj;
    aj["system"] = a.system;
    aj["user"] = a.user;
    aj["response"] = a.response;
    aj["error"] = a.error;
    attempts.push_back(std::move(aj));
  }
  j["attempts"] = std::move(attempts);
  return j;
}

inline nlohmann::ordered_json to_json(const RoutedQuery& q) {
  nlohmann::ordered_json j;
  j["route"] = std::string(to_string(q.route));
  j["data_query"] = q.data_query;
  j["knowledge_query"] = q.knowledge_query;
  j["date_from"] = q.date_from ? nlohmann::ordered_json(q.date_from->iso()) : nlohmann::ordered_json(nullptr);
  j["date_to"] = q.date_to ? nlohmann::ordered_json(q.date_to->iso()) : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json to_json(const FinalAnswer& fa, bool include_timings = true) {
  nlohmann::ordered_json j;
  j["question"] = fa.question;
  j["route"] = std::string(to_string(fa.route));
  j["bullets"] = fa.bullets;
  j["degraded"] = fa.degraded;
  if (fa.data_summary) j["data_summary"] = *fa.data_summary;
  if (fa.knowledge_summary) j["knowledge_summary"] = *fa.knowledge_summary;
  if (fa.error) j["error"] = *fa.error;

  nlohmann::ordered_json audit;
  audit["model"] = fa.model;
  audit["prompt_version"] = std::string(prompt_text::kVersion);
  audit["router_output"] = to_json(fa.audit.router.query);
  auto stages = nlohmann::ordered_json::array();
  stages.push_back(to_json(fa.audit.router.trace));
  if (fa.audit.data) {
    const auto& d = *fa.audit.data;
    nlohmann::ordered_json dj;
    dj["date_from"] = d.from.iso();
    dj["date_to"] = d.to.iso();
    dj["records_used"] = d.records_used;
    dj["degraded"] = d.degraded;
    dj["violations"] = d.violations;
    if (d.output) {
      dj["no_records"] = d.output->no_records;
      dj["data_analysis"] = d.output->data_analysis;
      dj["data_summary"] = d.output->data_summary;
      dj["data_brief"] = d.output->data_brief;
    }
    audit["data_output"] = std::move(dj);
    stages.push_back(to_json(d.trace));
  }
  if (fa.audit.knowledge) {
    const auto& k = *fa.audit.knowledge;
    nlohmann::ordered_json kj;
    kj["queries"] = k.queries;
    kj["degraded"] = k.degraded;
    kj["violations"] = k.violations;
    kj["notes"] = k.notes;
    if (k.output) {
      kj["relevance"] = std::string(to_string(k.output->relevance));
      kj["policy"] = std::string(integration_policy(k.output->relevance));
      kj["rag_view"] = k.output->rag_view;
      kj["llm_view"] = k.output->llm_view;
      kj["summary"] = k.output->summary;
    }
    audit["knowledge_output"] = std::move(kj);
    auto hits = nlohmann::ordered_json::array();
    for (const auto& r : k.retrieved) {
      nlohmann::ordered_json h;
      h["slice_id"] = r.hit.slice_id;
      h["fused_score"] = r.hit.fused_score;
      h["best_query_index"] = r.hit.best_query_index;
      h["key"] = r.slice.key;
      hits.push_back(std::move(h));
    }
    audit["retrieval_hits"] = std::move(hits);
    stages.push_back(to_json(k.expansion_trace));
    stages.push_back(to_json(k.expert_trace));
    stages.push_back(to_json(k.integration_trace));
  }
  if (fa.audit.synthesis) {
    audit["synthesis_violations"] = fa.audit.synthesis->violations;
    stages.push_back(to_json(fa.audit.synthesis->trace));
  }
  audit["stages"] = std::move(stages);
  audit["notes"] = fa.audit.notes;
  j["audit"] = std::move(audit);

  if (include_timings) {
    nlohmann::ordered_json t = nlohmann::ordered_json::object();
    for (const auto& [stage, ms] : fa.timings_ms) t[stage] = ms;
    j["timings_ms"] = std::move(t);
  }
  return j;
}

}  // namespace bessom
