#pragma once

// Loading, cleaning and segmentation of raw pack measurement files.
//
// Sign convention used throughout the library: discharge current is positive,
// charge current is negative.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bessom/calendar.hpp"
#include "bessom/error.hpp"

namespace bessom {

enum class OpType { charge, discharge };

inline std::string_view to_string(OpType t) { return t == OpType::charge ? "charge" : "discharge"; }

inline OpType op_type_from_string(std::string_view s) {
  if (s == "charge") return OpType::charge;
  if (s == "discharge") return OpType::discharge;
  throw ParseError("unknown op_type '" + std::string(s) + "'");
}

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct RawRow {
  double timestamp = 0.0;
  double current = kMissing;
  double soc = kMissing;
  std::vector<double> cell_voltages;
  std::vector<double> sensor_temps;

  friend bool operator==(const RawRow& a, const RawRow& b) {
    auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
    auto same_vec = [&](const std::vector<double>& x, const std::vector<double>& y) {
      return x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin(), same);
    };
    return a.timestamp == b.timestamp && same(a.current, b.current) && same(a.soc, b.soc) &&
           same_vec(a.cell_voltages, b.cell_voltages) && same_vec(a.sensor_temps, b.sensor_temps);
  }
};

/// Counters from the most recent clean() pass over one pack.
struct CleanStats {
  std::size_t duplicates_removed = 0;
  std::size_t rows_screened_out = 0;
  std::size_t values_interpolated = 0;
  std::size_t values_synchronized = 0;
  std::size_t rows_incomplete = 0;
};

struct PackChannels {
  int pack_id = 0;
  std::size_t cells = 0;
  std::size_t sensors = 0;
  std::vector<RawRow> rows;
  CleanStats stats;
};

struct LoadIssue {
  std::string file;
  std::size_t line = 0;
  std::string column;
  std::string message;
};

/// Parsed rows grouped by pack (ascending pack id).
struct RawChannelTable {
  std::vector<PackChannels> packs;
  std::vector<LoadIssue> issues;

  std::size_t row_count() const {
    return std::accumulate(packs.begin(), packs.end(), std::size_t{0},
                           [](std::size_t n, const PackChannels& p) { return n + p.rows.size(); });
  }

  const PackChannels* find(int pack_id) const {
    for (const auto& p : packs) {
      if (p.pack_id == pack_id) return &p;
    }
    return nullptr;
  }
};

/// Physical screening envelope (LFP chemistry) and channel synchronization tolerance.
struct IngestConfig {
  double voltage_min_V = 1.5;
  double voltage_max_V = 4.5;
  double temperature_min_C = -40.0;
  double temperature_max_C = 100.0;
  double sync_tolerance_s = 2.0;
};

/// Operation boundary rule. The defaults are assumptions about the BMS cadence.
struct SegmentationParams {
  double idle_current_A = 5.0;
  double idle_gap_s = 300.0;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

/// Parses `<prefix>001..<prefix>NNN` run starting at `pos`; returns its length.
inline std::size_t numbered_run(const std::vector<std::string_view>& header, std::size_t pos, std::string_view prefix) {
  std::size_t count = 0;
  while (pos + count < header.size()) {
    const auto name = trim(header[pos + count]);
    if (name.substr(0, prefix.size()) != prefix) break;
    const auto digits = name.substr(prefix.size());
    std::size_t index = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || index != count + 1) {
      throw ParseError("header mismatch: expected " + std::string(prefix) + std::to_string(count + 1) + " at column " +
                       std::to_string(pos + count + 1) + ", got '" + std::string(name) + "'");
    }
    ++count;
  }
  return count;
}

inline std::optional<int> pack_id_from_filename(const std::filesystem::path& path) {
  static const std::regex re(R"(pack[_-]?0*(\d+))", std::regex::icase);
  std::smatch m;
  const std::string stem = path.stem().string();
  if (std::regex_search(stem, m, re)) return std::stoi(m[1].str());
  return std::nullopt;
}

}  // namespace detail

/// Parses one pack's CSV stream.
///
/// Header: `timestamp,current_A,soc,V_cell_001..V_cell_m,T_sens_001..T_sens_p`.
/// Empty fields become missing values; unparseable fields are recorded in
/// `issues` and also treated as missing; a row whose timestamp cannot be parsed
/// is reported and skipped.
inline RawChannelTable parse_csv(std::istream& in, int pack_id, const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) break;
  }
  if (line_no == 0 || detail::trim(line).empty()) throw ParseError(source + ": header mismatch: empty file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM

  const std::string header_line = line;
  const auto header = detail::split_csv_line(header_line);
  const std::vector<std::string_view> fixed{"timestamp", "current_A", "soc"};
  if (header.size() < fixed.size()) throw ParseError(source + ": header mismatch: too few columns");
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (detail::trim(header[i]) != fixed[i]) {
      throw ParseError(source + ": header mismatch: column " + std::to_string(i + 1) + " must be '" +
                       std::string(fixed[i]) + "', got '" + std::string(detail::trim(header[i])) + "'");
    }
  }
  const std::size_t cells = detail::numbered_run(header, 3, "V_cell_");
  const std::size_t sensors = detail::numbered_run(header, 3 + cells, "T_sens_");
  if (cells == 0) throw ParseError(source + ": header mismatch: no V_cell_ columns");
  if (3 + cells + sensors != header.size()) {
    throw ParseError(source + ": header mismatch: unexpected column '" +
                     std::string(detail::trim(header[3 + cells + sensors])) + "'");
  }

  RawChannelTable table;
  PackChannels pack;
  pack.pack_id = pack_id;
  pack.cells = cells;
  pack.sensors = sensors;

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": inconsistent vector length: row has " +
                            std::to_string(fields.size()) + " fields, header declares " +
                            std::to_string(header.size()) + " (pack " + std::to_string(pack_id) + ")");
    }
    RawRow row;
    try {
      row.timestamp = parse_timestamp(detail::trim(fields[0]));
    } catch (const ParseError& e) {
      table.issues.push_back({source, line_no, "timestamp", std::string(e.what()) + "; row skipped"});
      continue;
    }
    auto value = [&](std::size_t col) {
      const auto text = detail::trim(fields[col]);
      if (text.empty()) return kMissing;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
        table.issues.push_back({source, line_no, std::string(detail::trim(header[col])),
                                "unparseable value '" + std::string(text) + "' treated as missing"});
        return kMissing;
      }
      return v;
    };
    row.current = value(1);
    row.soc = value(2);
    row.cell_voltages.resize(cells);
    row.sensor_temps.resize(sensors);
    for (std::size_t j = 0; j < cells; ++j) row.cell_voltages[j] = value(3 + j);
    for (std::size_t j = 0; j < sensors; ++j) row.sensor_temps[j] = value(3 + cells + j);
    pack.rows.push_back(std::move(row));
  }
  table.packs.push_back(std::move(pack));
  return table;
}

/// Loads one pack file. The pack id comes from `pack_id` or, if absent, from a
/// `pack<N>` token in the file name.
inline RawChannelTable load_csv(const std::filesystem::path& path, std::optional<int> pack_id = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error("missing file: " + path.string());
  if (!pack_id) pack_id = detail::pack_id_from_filename(path);
  if (!pack_id) throw ParseError(path.string() + ": cannot infer pack id (expected 'pack<N>' in the file name)");
  return parse_csv(in, *pack_id, path.filename().string());
}

/// Appends `more` into `into`, merging rows of packs present in both.
inline void merge_tables(RawChannelTable& into, RawChannelTable more) {
  for (auto& pack : more.packs) {
    auto it = std::find_if(into.packs.begin(), into.packs.end(),
                           [&](const PackChannels& p) { return p.pack_id == pack.pack_id; });
    if (it == into.packs.end()) {
      into.packs.push_back(std::move(pack));
      continue;
    }
    if (it->cells != pack.cells || it->sensors != pack.sensors) {
      throw ValidationError("inconsistent vector length: pack " + std::to_string(pack.pack_id) + " has " +
                            std::to_string(pack.cells) + " voltage / " + std::to_string(pack.sensors) +
                            " temperature columns, earlier rows had " + std::to_string(it->cells) + " / " +
                            std::to_string(it->sensors));
    }
    it->rows.insert(it->rows.end(), std::make_move_iterator(pack.rows.begin()),
                    std::make_move_iterator(pack.rows.end()));
  }
  into.issues.insert(into.issues.end(), more.issues.begin(), more.issues.end());
  std::sort(into.packs.begin(), into.packs.end(),
            [](const PackChannels& a, const PackChannels& b) { return a.pack_id < b.pack_id; });
}

/// Loads every `*.csv` in `dir` (lexicographic order), one file per pack per day.
inline RawChannelTable load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("missing directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no .csv files in " + dir.string());
  RawChannelTable table;
  for (const auto& f : files) merge_tables(table, load_csv(f));
  return table;
}

/// Cleans each pack independently:
///  1. sort by time, keep the first row of each duplicated timestamp;
///  2. drop rows with any voltage or temperature outside the screening envelope;
///  3. fill interior missing values by linear interpolation in time between the nearest valid neighbours;
///  4. fill leading/trailing missing values from the nearest valid sample within the sync tolerance;
///  5. drop rows that still have a missing value.
/// Throws ValidationError when a channel has fewer than two valid samples.
inline RawChannelTable clean(const RawChannelTable& table, const IngestConfig& cfg = {}) {
  RawChannelTable out;
  out.issues = table.issues;
  for (const auto& src : table.packs) {
    PackChannels pack;
    pack.pack_id = src.pack_id;
    pack.cells = src.cells;
    pack.sensors = src.sensors;
    CleanStats& st = pack.stats;

    std::vector<RawRow> rows = src.rows;
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawRow& a, const RawRow& b) { return a.timestamp < b.timestamp; });
    {
      std::vector<RawRow> unique;
      unique.reserve(rows.size());
      for (auto& r : rows) {
        if (!unique.empty() && unique.back().timestamp == r.timestamp) {
          ++st.duplicates_removed;
          continue;
        }
        unique.push_back(std::move(r));
      }
      rows = std::move(unique);
    }

    auto in_range = [](double v, double lo, double hi) { return std::isnan(v) || (v >= lo && v <= hi); };
    std::erase_if(rows, [&](const RawRow& r) {
      const bool ok =
          std::all_of(r.cell_voltages.begin(), r.cell_voltages.end(),
                      [&](double v) { return in_range(v, cfg.voltage_min_V, cfg.voltage_max_V); }) &&
          std::all_of(r.sensor_temps.begin(), r.sensor_temps.end(),
                      [&](double v) { return in_range(v, cfg.temperature_min_C, cfg.temperature_max_C); });
      if (!ok) ++st.rows_screened_out;
      return !ok;
    });

    const std::size_t channels = 2 + pack.cells + pack.sensors;
    auto channel_name = [&](std::size_t c) -> std::string {
      if (c == 0) return "current_A";
      if (c == 1) return "soc";
      if (c < 2 + pack.cells) return "V_cell_" + std::to_string(c - 1);
      return "T_sens_" + std::to_string(c - 1 - pack.cells);
    };
    auto at = [&](RawRow& r, std::size_t c) -> double& {
      if (c == 0) return r.current;
      if (c == 1) return r.soc;
      if (c < 2 + pack.cells) return r.cell_voltages[c - 2];
      return r.sensor_temps[c - 2 - pack.cells];
    };

    for (std::size_t c = 0; c < channels; ++c) {
      std::vector<std::size_t> valid;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!std::isnan(at(rows[i], c))) valid.push_back(i);
      }
      if (valid.size() < 2) {
        throw ValidationError("pack " + std::to_string(pack.pack_id) + ": channel " + channel_name(c) + " has " +
                              std::to_string(valid.size()) + " valid samples; at least 2 are needed");
      }
      for (std::size_t v = 0; v + 1 < valid.size(); ++v) {
        const std::size_t a = valid[v], b = valid[v + 1];
        if (b == a + 1) continue;
        const double ta = rows[a].timestamp, tb = rows[b].timestamp;
        const double ya = at(rows[a], c), yb = at(rows[b], c);
        for (std::size_t i = a + 1; i < b; ++i) {
          const double w = (rows[i].timestamp - ta) / (tb - ta);
          at(rows[i], c) = ya + w * (yb - ya);
          ++st.values_interpolated;
        }
      }
      const std::size_t first = valid.front(), last = valid.back();
      for (std::size_t i = 0; i < first; ++i) {
        if (rows[first].timestamp - rows[i].timestamp <= cfg.sync_tolerance_s) {
          at(rows[i], c) = at(rows[first], c);
          ++st.values_synchronized;
        }
      }
      for (std::size_t i = last + 1; i < rows.size(); ++i) {
        if (rows[i].timestamp - rows[last].timestamp <= cfg.sync_tolerance_s) {
          at(rows[i], c) = at(rows[last], c);
          ++st.values_synchronized;
        }
      }
    }

    std::erase_if(rows, [&](RawRow& r) {
      for (std::size_t c = 0; c < channels; ++c) {
        if (std::isnan(at(r, c))) {
          ++st.rows_incomplete;
          return true;
        }
      }
      return false;
    });
    pack.rows = std::move(rows);
    out.packs.push_back(std::move(pack));
  }
  return out;
}

/// One contiguous charge or discharge operation of one pack.
///
/// The constructor checks the invariants: at least two samples, strictly
/// increasing timestamps, matching channel lengths, finite values. The
/// operation type is derived from the sign of the mean current.
class OperationSegment {
 public:
  OperationSegment(int pack_id, std::vector<double> timestamps, Eigen::MatrixXd voltages,
                   Eigen::MatrixXd temperatures, std::vector<double> current, std::vector<double> soc)
      : pack_id_(pack_id),
        timestamps_(std::move(timestamps)),
        voltages_(std::move(voltages)),
        temperatures_(std::move(temperatures)),
        current_(std::move(current)),
        soc_(std::move(soc)) {
    const auto n = timestamps_.size();
    if (n < 2) throw ValidationError("operation segment needs at least 2 samples");
    for (std::size_t i = 1; i < n; ++i) {
      if (!(timestamps_[i] > timestamps_[i - 1])) throw ValidationError("segment timestamps must strictly increase");
    }
    if (static_cast<std::size_t>(voltages_.rows()) != n || static_cast<std::size_t>(temperatures_.rows()) != n ||
        current_.size() != n || soc_.size() != n) {
      throw ValidationError("segment channels must all have one entry per timestamp");
    }
    if (!voltages_.allFinite() || !temperatures_.allFinite() ||
        !std::all_of(current_.begin(), current_.end(), [](double v) { return std::isfinite(v); }) ||
        !std::all_of(soc_.begin(), soc_.end(), [](double v) { return std::isfinite(v); })) {
      throw ValidationError("segment contains non-finite values");
    }
    const double mean = std::accumulate(current_.begin(), current_.end(), 0.0) / static_cast<double>(n);
    op_type_ = mean < 0.0 ? OpType::charge : OpType::discharge;
  }

  int pack_id() const { return pack_id_; }
  OpType op_type() const { return op_type_; }
  std::size_t samples() const { return timestamps_.size(); }
  double start() const { return timestamps_.front(); }
  double end() const { return timestamps_.back(); }
  double duration() const { return end() - start(); }
  const std::vector<double>& timestamps() const { return timestamps_; }
  const Eigen::MatrixXd& voltages() const { return voltages_; }
  const Eigen::MatrixXd& temperatures() const { return temperatures_; }
  const std::vector<double>& current() const { return current_; }
  const std::vector<double>& soc() const { return soc_; }

 private:
  int pack_id_;
  OpType op_type_ = OpType::discharge;
  std::vector<double> timestamps_;
  Eigen::MatrixXd voltages_;
  Eigen::MatrixXd temperatures_;
  std::vector<double> current_;
  std::vector<double> soc_;
};

/// Builds the segment covering rows [first, last] of a cleaned pack.
inline OperationSegment make_segment(const PackChannels& pack, std::size_t first, std::size_t last) {
  const std::size_t n = last - first + 1;
  std::vector<double> t(n), i_a(n), z(n);
  Eigen::MatrixXd v(n, pack.cells), temp(n, pack.sensors);
  for (std::size_t k = 0; k < n; ++k) {
    const RawRow& r = pack.rows[first + k];
    t[k] = r.timestamp;
    i_a[k] = r.current;
    z[k] = r.soc;
    for (std::size_t j = 0; j < pack.cells; ++j) v(k, j) = r.cell_voltages[j];
    for (std::size_t j = 0; j < pack.sensors; ++j) temp(k, j) = r.sensor_temps[j];
  }
  return OperationSegment(pack.pack_id, std::move(t), std::move(v), std::move(temp), std::move(i_a), std::move(z));
}

/// Splits each cleaned pack into operations.
///
/// Active samples have |current| >= idle_current_A. Consecutive active samples
/// of the same sign form a run; a sign change always starts a new run. Two
/// same-sign runs are merged (idle samples included) when the time between the
/// last active sample of one and the first of the next is shorter than
/// idle_gap_s. Runs with fewer than two samples are discarded. Output is
/// ordered by pack, then time.
inline std::vector<OperationSegment> segment_operations(const RawChannelTable& table,
                                                        const SegmentationParams& params = {}) {
  std::vector<OperationSegment> out;
  for (const auto& pack : table.packs) {
    struct Run {
      std::size_t first, last;
      int sign;
    };
    std::vector<Run> runs;
    const auto& rows = pack.rows;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const double i_a = rows[k].current;
      if (std::isnan(i_a) || std::abs(i_a) < params.idle_current_A) continue;
      const int sign = i_a > 0 ? 1 : -1;
      if (!runs.empty()) {
        Run& cur = runs.back();
        // A data gap between adjacent active samples counts as idle time too.
        const double gap = rows[k].timestamp - rows[cur.last].timestamp;
        if (cur.sign == sign && gap < params.idle_gap_s) {
          cur.last = k;
          continue;
        }
      }
      runs.push_back({k, k, sign});
    }
    for (const auto& r : runs) {
      if (r.last > r.first && rows[r.last].timestamp > rows[r.first].timestamp) {
        out.push_back(make_segment(pack, r.first, r.last));
      }
    }
  }
  return out;
}

}  // namespace bessom
