#pragma once

// Date-keyed record dataset. Each entry holds the standard operations of one
// calendar day; each operation carries three per-pack matrices:
//   V = [dv_max; dv_mean; inconsistent cell count]
//   T = [dt_max; dt_mean; thermal consistency coefficient]
//   H = [state of health]
//
// On disk a store is a directory holding manifest.json plus one
// YYYY-MM-DD.json document per entry.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "bessom/calendar.hpp"
#include "bessom/error.hpp"
#include "bessom/health.hpp"
#include "bessom/ingest.hpp"
#include "bessom/thermal.hpp"
#include "bessom/voltage.hpp"
#include "json.hpp"

namespace bessom {

inline constexpr int kRecordSchemaVersion = 1;

struct OperationRecord {
  std::int64_t start = 0;
  std::int64_t end = 0;
  OpType op_type = OpType::discharge;
  Eigen::MatrixXd V;     // 3 x P
  Eigen::MatrixXd T;     // 3 x P
  Eigen::RowVectorXd H;  // 1 x P
};

struct RecordEntry {
  Date date;
  std::vector<OperationRecord> operations;
};

struct PackEvaluation {
  VoltageEvaluation voltage;
  ThermalEvaluation thermal;
  HealthResult health;
};

struct OperationMeta {
  std::int64_t start = 0;
  std::int64_t end = 0;
  OpType op_type = OpType::discharge;
};

/// Checks the matrix invariants of one entry against the store's pack count.
inline void validate_entry(const RecordEntry& e, std::size_t packs) {
  const std::string where = "record " + e.date.iso();
  if (e.operations.empty()) throw ValidationError(where + ": entry has no operations");
  for (std::size_t k = 0; k < e.operations.size(); ++k) {
    const auto& op = e.operations[k];
    const std::string at = where + " operation " + std::to_string(k + 1);
    const auto P = static_cast<Eigen::Index>(packs);
    if (op.V.rows() != 3 || op.V.cols() != P || op.T.rows() != 3 || op.T.cols() != P || op.H.size() != P) {
      throw ValidationError(at + ": matrices must be 3xP, 3xP and 1xP with P = " + std::to_string(packs));
    }
    if (!op.V.allFinite() || !op.T.allFinite() || !op.H.allFinite()) throw ValidationError(at + ": non-finite value");
    if (op.end < op.start) throw ValidationError(at + ": end precedes start");
    for (Eigen::Index j = 0; j < P; ++j) {
      const std::string col = " (pack " + std::to_string(j + 1) + ")";
      if (op.V(0, j) < op.V(1, j)) throw ValidationError(at + ": V row 1 below row 2" + col);
      if (op.V(1, j) < 0) throw ValidationError(at + ": negative voltage spread" + col);
      if (op.V(2, j) < 0 || op.V(2, j) != std::floor(op.V(2, j))) {
        throw ValidationError(at + ": V row 3 must be a non-negative integer count" + col);
      }
      if (op.T(0, j) < op.T(1, j)) throw ValidationError(at + ": T row 1 below row 2" + col);
      if (op.T(1, j) < 0) throw ValidationError(at + ": negative temperature spread" + col);
      if (!(op.H(j) > 0.0 && op.H(j) <= 1.5)) throw ValidationError(at + ": SOH outside (0, 1.5]" + col);
    }
  }
}

/// Assembles one operation, one column per pack in pack order.
inline OperationRecord build_operation(std::span<const PackEvaluation> per_pack, const OperationMeta& meta,
                                       std::size_t packs) {
  if (per_pack.size() != packs) {
    throw ValidationError("expected " + std::to_string(packs) + " pack results, got " +
                          std::to_string(per_pack.size()));
  }
  OperationRecord op;
  op.start = meta.start;
  op.end = meta.end;
  op.op_type = meta.op_type;
  const auto P = static_cast<Eigen::Index>(packs);
  op.V.resize(3, P);
  op.T.resize(3, P);
  op.H.resize(P);
  for (Eigen::Index j = 0; j < P; ++j) {
    const auto& r = per_pack[static_cast<std::size_t>(j)];
    op.V.col(j) << r.voltage.dv_max, r.voltage.dv_mean, static_cast<double>(r.voltage.inconsistent_count);
    op.T.col(j) << r.thermal.dt_max, r.thermal.dt_mean, r.thermal.tcc;
    op.H(j) = r.health.soh;
  }
  return op;
}

inline RecordEntry build_entry(Date date, std::span<const PackEvaluation> per_pack, const OperationMeta& meta,
                               std::size_t packs) {
  RecordEntry e{date, {build_operation(per_pack, meta, packs)}};
  validate_entry(e, packs);
  return e;
}

// ---------------------------------------------------------------------------
// Canonical JSON

using ojson = nlohmann::ordered_json;

namespace detail {

inline ojson matrix_rows(const Eigen::MatrixXd& m) {
  ojson rows = ojson::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ojson row = ojson::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from(const ojson& j, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ParseError(name + " must have " + std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError(name + " rows must have " + std::to_string(cols) + " columns");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw ParseError(name + " entries must be numbers");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

inline std::int64_t parse_epoch_field(const ojson& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw ParseError(std::string("operation field '") + key + "' missing");
  const double t = parse_timestamp(j[key].get<std::string>());
  return static_cast<std::int64_t>(std::floor(t));
}

}  // namespace detail

inline ojson to_json(const RecordEntry& e) {
  ojson j;
  j["date"] = e.date.iso();
  ojson ops = ojson::array();
  for (const auto& op : e.operations) {
    ojson o;
    o["start"] = format_iso_utc(op.start);
    o["end"] = format_iso_utc(op.end);
    o["op_type"] = std::string(to_string(op.op_type));
    o["V"] = detail::matrix_rows(op.V);
    o["T"] = detail::matrix_rows(op.T);
    o["H"] = detail::matrix_rows(Eigen::MatrixXd(op.H));
    ops.push_back(std::move(o));
  }
  j["operations"] = std::move(ops);
  return j;
}

inline RecordEntry entry_from_json(const ojson& j, std::size_t packs) {
  if (!j.is_object() || !j.contains("date") || !j["date"].is_string()) throw ParseError("record entry missing 'date'");
  RecordEntry e;
  e.date = Date::parse(j["date"].get<std::string>());
  if (!j.contains("operations") || !j["operations"].is_array()) throw ParseError("record entry missing 'operations'");
  const auto P = static_cast<Eigen::Index>(packs);
  for (const auto& o : j["operations"]) {
    OperationRecord op;
    op.start = detail::parse_epoch_field(o, "start");
    op.end = detail::parse_epoch_field(o, "end");
    if (!o.contains("op_type") || !o["op_type"].is_string()) throw ParseError("operation field 'op_type' missing");
    op.op_type = op_type_from_string(o["op_type"].get<std::string>());
    if (!o.contains("V") || !o.contains("T") || !o.contains("H")) throw ParseError("operation matrices missing");
    op.V = detail::matrix_from(o["V"], 3, P, "V");
    op.T = detail::matrix_from(o["T"], 3, P, "T");
    op.H = detail::matrix_from(o["H"], 1, P, "H").row(0);
    e.operations.push_back(std::move(op));
  }
  validate_entry(e, packs);
  return e;
}

/// Pretty-printed, newline-terminated canonical document.
inline std::string canonical_json(const RecordEntry& e) { return to_json(e).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Store

/// Read-side view of the record dataset used by the agents.
class RecordSource {
 public:
  virtual ~RecordSource() = default;
  /// Entries with from <= date <= to, ascending. Partial coverage is not an error.
  virtual std::vector<RecordEntry> query_range(Date from, Date to) const = 0;
  virtual std::optional<Date> latest_date() const = 0;
  virtual std::optional<Date> earliest_date() const = 0;
  virtual std::size_t size() const = 0;
  virtual std::size_t packs() const = 0;
};

class RecordStore : public RecordSource {
 public:
  explicit RecordStore(std::size_t packs = 9) : packs_(packs) {
    if (packs == 0) throw ValidationError("a record store needs at least one pack");
  }

  std::size_t packs() const override { return packs_; }
  std::size_t size() const override { return entries_.size(); }

  /// Inserts or replaces the entry for its date; returns true when an entry was replaced.
  bool insert(RecordEntry entry) {
    validate_entry(entry, packs_);
    const Date key = entry.date;
    auto [it, inserted] = entries_.insert_or_assign(key, std::move(entry));
    if (!inserted) spdlog::warn("record store: replaced existing entry for {}", key.iso());
    return !inserted;
  }

  /// Appends an operation to the entry of `date`, creating the entry if needed.
  void add_operation(Date date, OperationRecord op) {
    RecordEntry probe{date, {op}};
    validate_entry(probe, packs_);
    entries_[date].date = date;
    entries_[date].operations.push_back(std::move(op));
  }

  std::vector<RecordEntry> query_range(Date from, Date to) const override {
    if (to < from) throw ValidationError("inverted range: " + from.iso() + " > " + to.iso());
    std::vector<RecordEntry> out;
    for (auto it = entries_.lower_bound(from); it != entries_.end() && it->first <= to; ++it) out.push_back(it->second);
    return out;
  }

  std::optional<Date> latest_date() const override {
    if (entries_.empty()) return std::nullopt;
    return entries_.rbegin()->first;
  }

  std::optional<Date> earliest_date() const override {
    if (entries_.empty()) return std::nullopt;
    return entries_.begin()->first;
  }

  const std::map<Date, RecordEntry>& entries() const { return entries_; }

  void save(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    static const std::regex date_file(R"(^\d{4}-\d{2}-\d{2}\.json$)");
    for (const auto& f : fs::directory_iterator(dir)) {
      const auto name = f.path().filename().string();
      if (f.is_regular_file() && std::regex_match(name, date_file)) {
        if (!entries_.count(Date::parse(name.substr(0, 10)))) fs::remove(f.path());
      }
    }
    ojson manifest;
    manifest["schema_version"] = kRecordSchemaVersion;
    manifest["packs"] = packs_;
    write_atomically(dir / "manifest.json", manifest.dump(2) + "\n");
    for (const auto& [date, entry] : entries_) write_atomically(dir / (date.iso() + ".json"), canonical_json(entry));
  }

  static RecordStore load(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error("record store not found: " + dir.string());
    const ojson manifest = read_json(dir / "manifest.json");
    if (!manifest.is_object() || !manifest.contains("schema_version") || !manifest["schema_version"].is_number_integer()) {
      throw ParseError("manifest.json: missing schema_version");
    }
    const int version = manifest["schema_version"].get<int>();
    if (version != kRecordSchemaVersion) {
      throw SchemaError("unsupported record schema_version " + std::to_string(version) + " (expected " +
                        std::to_string(kRecordSchemaVersion) + ")");
    }
    if (!manifest.contains("packs") || !manifest["packs"].is_number_unsigned()) {
      throw ParseError("manifest.json: missing packs");
    }
    RecordStore store(manifest["packs"].get<std::size_t>());
    static const std::regex date_file(R"(^\d{4}-\d{2}-\d{2}\.json$)");
    for (const auto& f : fs::directory_iterator(dir)) {
      const auto name = f.path().filename().string();
      if (!f.is_regular_file() || !std::regex_match(name, date_file)) continue;
      RecordEntry e;
      try {
        e = entry_from_json(read_json(f.path()), store.packs_);
      } catch (const Error& err) {
        throw ParseError(name + ": " + err.what());
      }
      if (e.date.iso() != name.substr(0, 10)) throw ParseError(name + ": date key does not match file name");
      store.entries_.emplace(e.date, std::move(e));
    }
    return store;
  }

 private:
  static ojson read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot read " + p.string());
    try {
      return ojson::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(p.filename().string() + ": malformed JSON: " + e.what());
    }
  }

  static void write_atomically(const std::filesystem::path& p, const std::string& text) {
    const auto tmp = p.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write " + tmp);
      out << text;
    }
    std::filesystem::rename(tmp, p);
  }

  std::size_t packs_;
  std::map<Date, RecordEntry> entries_;
};

// ---------------------------------------------------------------------------
// Markdown

namespace detail {

inline std::string sig4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kTccOutOfRangeMarker = "(!)";

/// Deterministic Markdown rendering used as the data agent's context.
inline std::string render_markdown(std::span<const RecordEntry> entries) {
  if (entries.empty()) return "No records in the requested range.\n";
  std::ostringstream md;
  bool any_tcc_flag = false;
  for (const auto& e : entries) {
    md << "# Record " << e.date.iso() << "\n\n";
    for (std::size_t k = 0; k < e.operations.size(); ++k) {
      const auto& op = e.operations[k];
      const auto P = op.H.size();
      md << "## Operation " << (k + 1) << ": " << to_string(op.op_type) << ", " << format_iso_utc(op.start)
         << " to " << format_iso_utc(op.end) << "\n\n";
      auto header = [&] {
        md << "| Row |";
        for (Eigen::Index j = 0; j < P; ++j) md << " Pack " << (j + 1) << " |";
        md << "\n| --- |";
        for (Eigen::Index j = 0; j < P; ++j) md << " --- |";
        md << "\n";
      };
      auto row = [&](const char* label, auto&& cell) {
        md << "| " << label << " |";
        for (Eigen::Index j = 0; j < P; ++j) md << " " << cell(j) << " |";
        md << "\n";
      };
      md << "### V (voltage inconsistency matrix; rows 1-2 in V, row 3 in cells)\n\n";
      header();
      row("V_row1 (worst-case spread)", [&](Eigen::Index j) { return detail::sig4(op.V(0, j)); });
      row("V_row2 (average spread)", [&](Eigen::Index j) { return detail::sig4(op.V(1, j)); });
      row("V_row3 (bad cells)", [&](Eigen::Index j) { return detail::sig4(op.V(2, j)); });
      md << "\n### T (temperature inconsistency matrix; rows 1-2 in degC)\n\n";
      header();
      row("T_row1 (worst-case thermal non-uniformity)", [&](Eigen::Index j) { return detail::sig4(op.T(0, j)); });
      row("T_row2 (mean temperature difference)", [&](Eigen::Index j) { return detail::sig4(op.T(1, j)); });
      row("T_row3 (thermal consistency coefficient)", [&](Eigen::Index j) {
        const double v = op.T(2, j);
        if (v < 0.0 || v > 1.0) {
          any_tcc_flag = true;
          return detail::sig4(v) + " " + kTccOutOfRangeMarker;
        }
        return detail::sig4(v);
      });
      md << "\n### H (health vector)\n\n";
      header();
      row("H (SOH)", [&](Eigen::Index j) { return detail::sig4(op.H(j)); });
      md << "\n";
    }
  }
  if (any_tcc_flag) {
    md << kTccOutOfRangeMarker << " thermal consistency coefficient outside the nominal 0-1 range; raw value shown.\n";
  }
  return md.str();
}

}  // namespace bessom
