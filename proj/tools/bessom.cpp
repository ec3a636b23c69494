// Command-line front end: data pipeline steps, knowledge index build, queries and the HTTP service.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "bessom/bessom.hpp"
#include "bessom/providers.hpp"
#include "bessom/service.hpp"

namespace fs = std::filesystem;
using bessom::ojson;

namespace {

struct Globals {
  std::string config_path;
  bool mock = false;
  std::string log_level = "warn";
};

bessom::Config load(const Globals& g) {
  auto cfg = bessom::load_config(g.config_path);
  if (g.mock) {
    cfg.llm.provider = "mock";
    cfg.embedding.provider = "mock";
  }
  return cfg;
}

void print(const ojson& j) { std::cout << j.dump(2) << "\n"; }

bessom::RawChannelTable load_clean(const fs::path& dir, const bessom::Config& cfg, ojson* issues = nullptr) {
  const auto raw = bessom::load_directory(dir);
  auto cleaned = bessom::clean(raw, cfg.pipeline.ingest);
  if (issues) {
    *issues = ojson::array();
    for (const auto& i : cleaned.issues) {
      issues->push_back({{"file", i.file}, {"line", i.line}, {"column", i.column}, {"message", i.message}});
    }
  }
  return cleaned;
}

int cmd_synth(const fs::path& out, const std::string& date, int days, bessom::SynthSpec spec) {
  auto start = bessom::Date::parse(date);
  std::size_t files = 0;
  for (int d = 0; d < days; ++d) {
    spec.date = start.plus_days(d);
    files += bessom::write_synthetic_day(spec, out).size();
    spec.seed += 1;
  }
  std::cout << "wrote " << files << " files to " << out.string() << "\n";
  return 0;
}

int cmd_ingest(const fs::path& in, const bessom::Config& cfg) {
  ojson issues;
  const auto table = load_clean(in, cfg, &issues);
  ojson packs = ojson::array();
  for (const auto& p : table.packs) {
    ojson pj;
    pj["pack_id"] = p.pack_id;
    pj["cells"] = p.cells;
    pj["sensors"] = p.sensors;
    pj["rows"] = p.rows.size();
    pj["duplicates_removed"] = p.stats.duplicates_removed;
    pj["rows_screened_out"] = p.stats.rows_screened_out;
    pj["values_interpolated"] = p.stats.values_interpolated;
    pj["values_synchronized"] = p.stats.values_synchronized;
    pj["rows_incomplete"] = p.stats.rows_incomplete;
    if (!p.rows.empty()) {
      pj["first"] = bessom::format_iso_utc(static_cast<std::int64_t>(p.rows.front().timestamp));
      pj["last"] = bessom::format_iso_utc(static_cast<std::int64_t>(p.rows.back().timestamp));
    }
    packs.push_back(std::move(pj));
  }
  print({{"packs", packs}, {"issues", issues}});
  return 0;
}

int cmd_select_ops(const fs::path& in, const bessom::Config& cfg) {
  const auto table = load_clean(in, cfg);
  cfg.pipeline.selection.validate();
  ojson ops = ojson::array();
  for (const auto& op : bessom::segment_operations(table, cfg.pipeline.segmentation)) {
    const auto d = bessom::classify_operation(op, cfg.pipeline.selection);
    ojson oj;
    oj["pack_id"] = op.pack_id();
    oj["start"] = bessom::format_iso_utc(static_cast<std::int64_t>(op.start()));
    oj["end"] = bessom::format_iso_utc(static_cast<std::int64_t>(op.end()));
    oj["op_type"] = std::string(bessom::to_string(op.op_type()));
    oj["duration_s"] = d.duration_s;
    oj["verdict"] = std::string(bessom::to_string(d.verdict));
    if (d.fit) {
      oj["fitted_current_A"] = d.fit->c_star;
      oj["rmse_A"] = d.fit->rmse;
    }
    ops.push_back(std::move(oj));
  }
  print({{"operations", ops}});
  return 0;
}

int cmd_evaluate(const fs::path& in, const bessom::Config& cfg) {
  const auto table = load_clean(in, cfg);
  ojson out = ojson::array();
  for (auto& s : bessom::select_standard_ops(bessom::segment_operations(table, cfg.pipeline.segmentation),
                                             cfg.pipeline.selection)) {
    ojson oj;
    oj["pack_id"] = s.op.pack_id();
    oj["start"] = bessom::format_iso_utc(static_cast<std::int64_t>(s.op.start()));
    oj["op_type"] = std::string(bessom::to_string(s.op.op_type()));
    try {
      const auto e = bessom::evaluate_pack_operation(s.op, cfg.pipeline);
      oj["voltage"] = {{"dv_max", e.voltage.dv_max},
                       {"dv_mean", e.voltage.dv_mean},
                       {"inconsistent_count", e.voltage.inconsistent_count},
                       {"flagged_cells", e.voltage.flagged_cells},
                       {"rpca_converged", e.voltage.rpca_converged},
                       {"rpca_iterations", e.voltage.rpca_iterations}};
      oj["thermal"] = {{"dt_max", e.thermal.dt_max}, {"dt_mean", e.thermal.dt_mean}, {"tcc", e.thermal.tcc}};
      oj["health"] = {{"q_hat_Ah", e.health.q_hat},
                      {"soh", e.health.soh},
                      {"pairs_used", e.health.pairs_used},
                      {"at_bracket_edge", e.health.at_bracket_edge}};
    } catch (const bessom::Error& e) {
      oj["error"] = e.what();
    }
    out.push_back(std::move(oj));
  }
  print({{"evaluations", out}});
  return 0;
}

int cmd_build_records(const fs::path& in, const fs::path& out, const bessom::Config& cfg) {
  const auto table = load_clean(in, cfg);
  bessom::PipelineReport report;
  auto built = bessom::build_records(table, cfg.pipeline, &report);
  bessom::RecordStore store = fs::exists(out / "manifest.json") ? bessom::RecordStore::load(out)
                                                               : bessom::RecordStore(built.packs());
  for (const auto& [date, entry] : built.entries()) store.insert(entry);
  store.save(out);
  print({{"operations_found", report.operations_found},
         {"standard_operations", report.standard_operations},
         {"operations_recorded", report.operations_recorded},
         {"entries_written", built.size()},
         {"store_entries", store.size()},
         {"notes", report.notes}});
  return 0;
}

int cmd_kb_build(const fs::path& in, const fs::path& out, const bessom::Config& cfg) {
  if (!fs::is_directory(in)) throw bessom::Error("missing directory: " + in.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in)) {
    if (e.is_regular_file() && e.path().extension() == ".md") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw bessom::Error("no .md files in " + in.string());
  std::vector<bessom::KnowledgeSlice> slices;
  std::size_t warnings = 0;
  for (const auto& f : files) {
    std::ifstream s(f);
    const std::string text((std::istreambuf_iterator<char>(s)), std::istreambuf_iterator<char>());
    auto parsed = bessom::parse_slices(text, f.stem().string());
    for (const auto& d : parsed.diagnostics) {
      std::cerr << f.filename().string() << ":" << d.line << ": " << (d.warning_only ? "warning: " : "error: ")
                << d.message << "\n";
      warnings += d.warning_only ? 1 : 0;
    }
    slices.insert(slices.end(), parsed.slices.begin(), parsed.slices.end());
  }
  auto provider = bessom::make_embedding(cfg.embedding);
  const auto index = bessom::KnowledgeIndex::build(std::move(slices), *provider, cfg.embedding.batch_size);
  index.save(out);
  print({{"files", files.size()},
         {"slices", index.size()},
         {"warnings", warnings},
         {"dimension", index.dimension()},
         {"fingerprint", index.fingerprint()}});
  return 0;
}

int cmd_query(const std::string& question, const fs::path& store_dir, const fs::path& index_dir, bool audit,
              bool timings, const bessom::Config& cfg) {
  const auto store = bessom::RecordStore::load(store_dir);
  const auto index = bessom::KnowledgeIndex::load(index_dir);
  auto embedder = bessom::make_embedding(cfg.embedding);
  auto llm = bessom::make_llm(cfg.llm);
  bessom::IndexedKnowledge knowledge(index, *embedder);
  const auto fa = bessom::answer(question, bessom::AgentDeps{*llm, &store, &knowledge, cfg.agents});
  std::cout << "route: " << bessom::to_string(fa.route) << (fa.degraded ? " (degraded)" : "") << "\n";
  for (const auto& b : fa.bullets) std::cout << b << "\n";
  if (audit) std::cout << bessom::to_json(fa, timings).dump(2) << "\n";
  std::cerr << "timings_ms:";
  for (const auto& [stage, ms] : fa.timings_ms) std::cerr << " " << stage << "=" << ms;
  std::cerr << "\n";
  if (fa.error) {
    std::cerr << "error: " << *fa.error << "\n";
    return 1;
  }
  return 0;
}

bessom::Service* g_service = nullptr;

int cmd_serve(const fs::path& store_dir, const fs::path& index_dir, const bessom::Config& cfg) {
  const auto store = bessom::RecordStore::load(store_dir);
  const auto index = bessom::KnowledgeIndex::load(index_dir);
  auto embedder = bessom::make_embedding(cfg.embedding);
  if (embedder->fingerprint() != index.fingerprint()) {
    throw bessom::ValidationError("embedding provider '" + embedder->fingerprint() + "' does not match the index ('" +
                                  index.fingerprint() + "')");
  }
  auto llm = bessom::make_llm(cfg.llm);
  bessom::Service service({store, index, *embedder, *llm, cfg.agents, cfg.service});
  const int port = service.bind();
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  std::cerr << "serving " << store.size() << " record entries and " << index.size() << " slices on "
            << cfg.service.host << ":" << port << "\n";
  service.run();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Battery storage inconsistency analysis and O&M question answering"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_flag("--mock", g.mock, "Use the deterministic mock LLM and embedding providers");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");

  std::string in, out, store_dir = "data/records", index_dir = "data/index", question, date = "2025-01-15";
  bool audit = false, timings = false;
  int days = 1;
  bessom::SynthSpec spec;

  auto* synth = app.add_subcommand("synth", "Write synthetic pack logs");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--date", date, "First day (YYYY-MM-DD)");
  synth->add_option("--days", days, "Number of days")->check(CLI::Range(1, 366));
  synth->add_option("--packs", spec.packs, "Packs")->check(CLI::Range(1, 64));
  synth->add_option("--cells", spec.cells, "Cells per pack")->check(CLI::Range(2, 4096));
  synth->add_option("--sensors", spec.sensors, "Temperature sensors per pack")->check(CLI::Range(1, 1024));
  synth->add_option("--dt", spec.dt_s, "Sample interval in seconds")->check(CLI::PositiveNumber);
  synth->add_option("--seed", spec.seed, "Random seed");

  auto* ingest = app.add_subcommand("ingest", "Load and clean pack logs, print a summary");
  ingest->add_option("--in", in, "Directory of pack CSV files")->required();
  auto* select = app.add_subcommand("select-ops", "Segment operations and report the screening verdicts");
  select->add_option("--in", in, "Directory of pack CSV files")->required();
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate every standard operation of every pack");
  evaluate->add_option("--in", in, "Directory of pack CSV files")->required();
  auto* build = app.add_subcommand("build-records", "Build or update the record store");
  build->add_option("--in", in, "Directory of pack CSV files")->required();
  build->add_option("--out", out, "Record store directory")->required();
  auto* kb = app.add_subcommand("kb-build", "Build the knowledge index from Markdown slices");
  kb->add_option("--in", in, "Directory of Markdown files")->required();
  kb->add_option("--out", out, "Index directory")->required();
  auto* query = app.add_subcommand("query", "Answer one question");
  query->add_option("-q,--question", question, "Question text")->required();
  query->add_option("--store", store_dir, "Record store directory");
  query->add_option("--index", index_dir, "Knowledge index directory");
  query->add_flag("--audit", audit, "Print the full audit as JSON");
  query->add_flag("--timings", timings, "Include stage timings in the audit JSON");
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--store", store_dir, "Record store directory");
  serve->add_option("--index", index_dir, "Knowledge index directory");
  std::string host;
  int port = -1;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("bessom"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    auto cfg = load(g);
    if (*synth) return cmd_synth(out, date, days, spec);
    if (*ingest) return cmd_ingest(in, cfg);
    if (*select) return cmd_select_ops(in, cfg);
    if (*evaluate) return cmd_evaluate(in, cfg);
    if (*build) return cmd_build_records(in, out, cfg);
    if (*kb) return cmd_kb_build(in, out, cfg);
    if (*query) return cmd_query(question, store_dir, index_dir, audit, timings, cfg);
    if (*serve) {
      if (!host.empty()) cfg.service.host = host;
      if (port >= 0) cfg.service.port = port;
      return cmd_serve(store_dir, index_dir, cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
