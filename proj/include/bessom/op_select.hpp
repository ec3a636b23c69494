#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "bessom/error.hpp"
#include "bessom/ingest.hpp"

namespace bessom {

/// Thresholds for standard-operation screening.
struct SelectionParams {
  double min_duration_s = 5400.0;
  double min_current_A = 110.0;
  double max_rmse_A = 15.0;
  double trim_fraction = 1.0 / 6.0;
  /// Compare the signed fitted current against the threshold instead of its magnitude.
  bool signed_threshold = false;

  void validate() const {
    if (!(min_duration_s > 0 && min_current_A > 0 && max_rmse_A > 0)) {
      throw ValidationError("selection thresholds must be strictly positive");
    }
    if (!(trim_fraction > 0 && trim_fraction < 0.5)) throw ValidationError("trim_fraction must lie in (0, 0.5)");
  }
};

struct FitResult {
  double c_star = 0.0;
  double rmse = 0.0;
  std::size_t middle_index_count = 0;
};

/// Least-squares constant fit over the middle window
/// [t_1 + f*(t_n - t_1), t_n - f*(t_n - t_1)], both ends closed.
inline FitResult fit_constant(std::span<const double> timestamps, std::span<const double> current,
                              double trim_fraction) {
  if (timestamps.size() != current.size()) throw ValidationError("timestamps and current differ in length");
  if (timestamps.size() < 3) throw ValidationError("empty middle window: fewer than 3 samples");
  const double t1 = timestamps.front(), tn = timestamps.back();
  const double trim = (tn - t1) * trim_fraction;
  const double lo = t1 + trim, hi = tn - trim;

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < timestamps.size(); ++j) {
    if (timestamps[j] >= lo && timestamps[j] <= hi) {
      sum += current[j];
      ++count;
    }
  }
  if (count == 0) throw ValidationError("empty middle window");
  const double c = sum / static_cast<double>(count);
  double sq = 0.0;
  for (std::size_t j = 0; j < timestamps.size(); ++j) {
    if (timestamps[j] >= lo && timestamps[j] <= hi) sq += (current[j] - c) * (current[j] - c);
  }
  return {c, std::sqrt(sq / static_cast<double>(count)), count};
}

inline FitResult fit_constant(const OperationSegment& op, double trim_fraction) {
  return fit_constant(op.timestamps(), op.current(), trim_fraction);
}

enum class Verdict { accepted, short_duration, empty_window, low_current, fluctuating };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::accepted: return "accepted";
    case Verdict::short_duration: return "short_duration";
    case Verdict::empty_window: return "empty_window";
    case Verdict::low_current: return "low_current";
    case Verdict::fluctuating: return "large_fitting_error";
  }
  return "unknown";
}

struct SelectionDecision {
  Verdict verdict = Verdict::short_duration;
  double duration_s = 0.0;
  std::optional<FitResult> fit;

  bool accepted() const { return verdict == Verdict::accepted; }
};

/// Applies the screening tests in order: duration, fitted magnitude, RMSE.
inline SelectionDecision classify_operation(std::span<const double> timestamps, std::span<const double> current,
                                            const SelectionParams& params) {
  SelectionDecision d;
  d.duration_s = timestamps.empty() ? 0.0 : timestamps.back() - timestamps.front();
  if (d.duration_s < params.min_duration_s) {
    d.verdict = Verdict::short_duration;
    return d;
  }
  try {
    d.fit = fit_constant(timestamps, current, params.trim_fraction);
  } catch (const ValidationError&) {
    d.verdict = Verdict::empty_window;
    return d;
  }
  const double level = params.signed_threshold ? d.fit->c_star : std::abs(d.fit->c_star);
  if (level < params.min_current_A) {
    d.verdict = Verdict::low_current;
  } else if (d.fit->rmse > params.max_rmse_A) {
    d.verdict = Verdict::fluctuating;
  } else {
    d.verdict = Verdict::accepted;
  }
  return d;
}

inline SelectionDecision classify_operation(const OperationSegment& op, const SelectionParams& params) {
  return classify_operation(op.timestamps(), op.current(), params);
}

struct StandardOperation {
  OperationSegment op;
  FitResult fit;
};

/// Keeps the operations passing all three tests, in input order.
inline std::vector<StandardOperation> select_standard_ops(std::vector<OperationSegment> ops,
                                                          const SelectionParams& params) {
  params.validate();
  std::vector<StandardOperation> out;
  for (auto& op : ops) {
    const auto d = classify_operation(op, params);
    if (d.accepted()) out.push_back({std::move(op), *d.fit});
  }
  return out;
}

}  // namespace bessom
