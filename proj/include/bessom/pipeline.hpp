#pragma once

// Raw logs to record store: clean, segment, keep standard operations, match
// the same operation across packs, evaluate every pack and file the result
// under the UTC date of the operation start.

#include <algorithm>
#include <cmath>
#include <future>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "bessom/health.hpp"
#include "bessom/ingest.hpp"
#include "bessom/op_select.hpp"
#include "bessom/records.hpp"
#include "bessom/thermal.hpp"
#include "bessom/voltage.hpp"

namespace bessom {

struct HealthParams {
  SteadyParams steady{};
  CapacitySearch search{};
  CapacityNoiseModel noise{};
  double q_nom_Ah = 300.0;
  /// Steady periods with a smaller absolute SOC change are not used.
  double min_soc_change = 0.05;
  double eta = 1.0;
};

struct PipelineConfig {
  IngestConfig ingest{};
  SegmentationParams segmentation{};
  SelectionParams selection{};
  VoltageEvalParams voltage{RpcaParams{}, 4.5, false, 240};
  HealthParams health{};
  /// A pack's operation matches the reference operation when their overlap
  /// exceeds this fraction of the reference duration.
  double match_overlap = 0.5;
};

/// SOH from the steady periods of one operation.
inline HealthResult estimate_operation_health(const OperationSegment& op, const HealthParams& p) {
  const auto segments = detect_steady_segments(op.current(), op.timestamps(), p.steady);
  std::vector<CapacityPair> pairs;
  for (const auto& s : segments) {
    if (std::abs(op.soc()[s.k2] - op.soc()[s.k1]) < p.min_soc_change) continue;
    pairs.push_back(ah_integrate(s, op.current(), op.soc(), op.timestamps(), p.eta, p.noise));
  }
  if (pairs.empty()) throw ValidationError("no steady period with enough SOC change for capacity estimation");
  return estimate_capacity(pairs, p.q_nom_Ah, p.search);
}

inline PackEvaluation evaluate_pack_operation(const OperationSegment& op, const PipelineConfig& cfg) {
  PackEvaluation e;
  e.voltage = evaluate_pack_voltage(op.voltages(), cfg.voltage);
  e.thermal = evaluate_pack_thermal(op.temperatures());
  e.health = estimate_operation_health(op, cfg.health);
  return e;
}

struct PipelineReport {
  std::size_t operations_found = 0;
  std::size_t standard_operations = 0;
  std::size_t operations_recorded = 0;
  std::vector<std::string> notes;
};

/// Builds records from a cleaned table. Columns follow ascending pack id; the
/// lowest pack id is the reference whose standard operations define the rows.
inline RecordStore build_records(const RawChannelTable& cleaned, const PipelineConfig& cfg,
                                 PipelineReport* report = nullptr) {
  PipelineReport local;
  PipelineReport& rep = report ? *report : local;
  if (cleaned.packs.empty()) throw ValidationError("no packs to process");
  cfg.selection.validate();

  std::vector<int> pack_ids;
  for (const auto& p : cleaned.packs) pack_ids.push_back(p.pack_id);
  std::sort(pack_ids.begin(), pack_ids.end());

  auto segments = segment_operations(cleaned, cfg.segmentation);
  rep.operations_found = segments.size();
  std::vector<std::vector<StandardOperation>> standard(pack_ids.size());
  for (std::size_t j = 0; j < pack_ids.size(); ++j) {
    std::vector<OperationSegment> mine;
    for (const auto& s : segments) {
      if (s.pack_id() == pack_ids[j]) mine.push_back(s);
    }
    standard[j] = select_standard_ops(std::move(mine), cfg.selection);
  }
  for (const auto& s : standard) rep.standard_operations += s.size();

  RecordStore store(pack_ids.size());
  for (const auto& ref : standard.front()) {
    const std::string label = format_iso_utc(static_cast<std::int64_t>(std::floor(ref.op.start())));
    std::vector<const OperationSegment*> matched{&ref.op};
    for (std::size_t j = 1; j < pack_ids.size(); ++j) {
      const OperationSegment* best = nullptr;
      double best_overlap = cfg.match_overlap * ref.op.duration();
      for (const auto& cand : standard[j]) {
        if (cand.op.op_type() != ref.op.op_type()) continue;
        const double overlap = std::min(cand.op.end(), ref.op.end()) - std::max(cand.op.start(), ref.op.start());
        if (overlap > best_overlap) {
          best_overlap = overlap;
          best = &cand.op;
        }
      }
      if (!best) break;
      matched.push_back(best);
    }
    if (matched.size() != pack_ids.size()) {
      rep.notes.push_back("operation at " + label + " skipped: pack " + std::to_string(pack_ids[matched.size()]) +
                          " has no matching standard operation");
      continue;
    }

    std::vector<std::future<PackEvaluation>> jobs;
    for (const auto* op : matched) {
      jobs.push_back(std::async(std::launch::async, [op, &cfg] { return evaluate_pack_operation(*op, cfg); }));
    }
    std::vector<PackEvaluation> evals;
    std::string failure;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      try {
        evals.push_back(jobs[j].get());
      } catch (const std::exception& e) {
        if (failure.empty()) failure = "pack " + std::to_string(pack_ids[j]) + ": " + e.what();
      }
    }
    if (!failure.empty()) {
      rep.notes.push_back("operation at " + label + " skipped: " + failure);
      continue;
    }
    for (std::size_t j = 0; j < evals.size(); ++j) {
      if (!evals[j].voltage.rpca_converged) {
        rep.notes.push_back("operation at " + label + ": RPCA did not converge for pack " + std::to_string(pack_ids[j]));
      }
    }
    const OperationMeta meta{static_cast<std::int64_t>(std::floor(ref.op.start())),
                             static_cast<std::int64_t>(std::floor(ref.op.end())), ref.op.op_type()};
    try {
      store.add_operation(date_of(ref.op.start()), build_operation(evals, meta, pack_ids.size()));
      ++rep.operations_recorded;
    } catch (const ValidationError& e) {
      rep.notes.push_back("operation at " + label + " skipped: " + e.what());
    }
  }
  for (const auto& n : rep.notes) spdlog::warn("{}", n);
  return store;
}

}  // namespace bessom
