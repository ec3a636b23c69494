#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "bessom/spread.hpp"

namespace bessom {

struct ThermalEvaluation {
  double dt_max = 0.0;
  double dt_mean = 0.0;
  double tcc = 0.0;
  std::size_t skipped_terms = 0;
};

/// (dt_max, dt_mean) of B (q samples x p sensors).
inline SpreadStats temp_ranges(const Eigen::MatrixXd& b) { return row_spread_stats(b); }

struct TccResult {
  double value = 0.0;
  /// Rows whose sensor range is zero; their term is undefined and left out.
  std::size_t skipped_terms = 0;
};

/// Thermal consistency coefficient:
///   sum_{t=2..q} sum_j (B_tj - B_1j) / (p * (t-1) * (max_j B_tj - min_j B_tj)).
/// Reported raw; it is not bounded to [0, 1].
inline TccResult tcc(const Eigen::MatrixXd& b) {
  if (b.rows() < 2) throw ValidationError("tcc needs at least two sample rows");
  if (b.cols() < 1) throw ValidationError("tcc needs at least one sensor");
  const auto p = static_cast<double>(b.cols());
  TccResult r;
  for (Eigen::Index t = 1; t < b.rows(); ++t) {
    const double range = b.row(t).maxCoeff() - b.row(t).minCoeff();
    if (range == 0.0) {
      ++r.skipped_terms;
      continue;
    }
    const double drift = (b.row(t) - b.row(0)).sum();
    r.value += drift / (p * static_cast<double>(t) * range);
  }
  return r;
}

inline ThermalEvaluation evaluate_pack_thermal(const Eigen::MatrixXd& b) {
  const auto ranges = temp_ranges(b);
  const auto c = tcc(b);
  return {ranges.max, ranges.mean, c.value, c.skipped_terms};
}

}  // namespace bessom
