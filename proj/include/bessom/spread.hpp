#pragma once

#include <algorithm>

#include <Eigen/Dense>

#include "bessom/error.hpp"

namespace bessom {

/// Worst-case and average of the per-row (per-instant) max - min spread.
struct SpreadStats {
  double max = 0.0;
  double mean = 0.0;
};

inline SpreadStats row_spread_stats(const Eigen::MatrixXd& x) {
  if (x.rows() < 1) throw ValidationError("spread needs at least one sample row");
  if (x.cols() < 2) throw ValidationError("spread needs at least two channels (columns)");
  const Eigen::VectorXd spread = x.rowwise().maxCoeff() - x.rowwise().minCoeff();
  SpreadStats s;
  s.max = spread.maxCoeff();
  // Summation rounding must not push the mean above the maximum.
  s.mean = std::min(spread.mean(), s.max);
  return s;
}

}  // namespace bessom
