#pragma once

// Electrical inconsistency of one pack: voltage spread statistics plus the
// count of cells whose projection onto the dominant low-rank voltage pattern
// is an outlier.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "bessom/rpca.hpp"
#include "bessom/spread.hpp"

namespace bessom {

struct VoltageEvalParams {
  RpcaParams rpca;
  double threshold = 4.5;
  /// Flag |score| > threshold instead of score > threshold.
  bool two_sided = false;
  /// Uniformly decimate sample rows before RPCA when n exceeds this (0 = never).
  std::size_t max_rpca_rows = 0;
};

struct VoltageEvaluation {
  double dv_max = 0.0;
  double dv_mean = 0.0;
  std::size_t inconsistent_count = 0;
  Eigen::VectorXd scores;
  std::vector<std::size_t> flagged_cells;
  bool rpca_converged = true;
  int rpca_iterations = 0;
};

/// (dv_max, dv_mean) of A (n samples x m cells).
inline SpreadStats voltage_ranges(const Eigen::MatrixXd& a) { return row_spread_stats(a); }

struct CellScores {
  /// Normalized indicator per cell, zero mean and unit population std
  /// (all zeros when the projection has no spread).
  Eigen::VectorXd scores;
  /// Raw projection of each cell's voltage series onto the dominant pattern.
  Eigen::VectorXd projection;
  bool degenerate = false;
  RpcaResult rpca;
};

namespace detail {

inline Eigen::MatrixXd decimate_rows(const Eigen::MatrixXd& a, std::size_t max_rows) {
  const auto n = static_cast<std::size_t>(a.rows());
  if (max_rows < 2 || n <= max_rows) return a;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(max_rows), a.cols());
  for (std::size_t i = 0; i < max_rows; ++i) {
    const auto src = static_cast<Eigen::Index>(std::llround(static_cast<double>(i) * static_cast<double>(n - 1) /
                                                            static_cast<double>(max_rows - 1)));
    out.row(static_cast<Eigen::Index>(i)) = a.row(src);
  }
  return out;
}

}  // namespace detail

/// Projects each cell's voltage series onto the dominant temporal singular
/// vector of the RPCA low-rank part and z-normalizes across cells.
///
/// A is samples x cells, so the dominant temporal pattern is the first left
/// singular vector u of L (equivalently the first right singular vector of
/// the cells x samples matrix), and f = A^T u has one entry per cell. The sign
/// of u is fixed so that it points along the per-sample mean voltage profile.
inline CellScores inconsistency_scores(const Eigen::MatrixXd& a_full, const RpcaParams& params = {},
                                       std::size_t max_rpca_rows = 0) {
  const Eigen::MatrixXd a = detail::decimate_rows(a_full, max_rpca_rows);
  CellScores out;
  out.rpca = rpca_decompose(a, params);
  const Eigen::Index m = a.cols();

  Eigen::VectorXd u;
  if (out.rpca.low_rank.isZero(0.0)) {
    u = Eigen::VectorXd::Zero(a.rows());
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(out.rpca.low_rank, Eigen::ComputeThinU);
    u = svd.matrixU().col(0);
    const Eigen::VectorXd mean_profile = a.rowwise().mean();
    if (u.dot(mean_profile) < 0.0) u = -u;
  }

  out.projection = a.transpose() * u;
  const double mu = out.projection.mean();
  const double sigma = std::sqrt((out.projection.array() - mu).square().sum() / static_cast<double>(m));
  if (!(sigma >= 1e-12)) {
    out.degenerate = true;
    out.scores = Eigen::VectorXd::Zero(m);
  } else {
    out.scores = (out.projection.array() - mu) / sigma;
  }
  return out;
}

inline VoltageEvaluation evaluate_pack_voltage(const Eigen::MatrixXd& a, const VoltageEvalParams& params = {}) {
  const auto ranges = voltage_ranges(a);
  auto cell = inconsistency_scores(a, params.rpca, params.max_rpca_rows);
  VoltageEvaluation ev;
  ev.dv_max = ranges.max;
  ev.dv_mean = ranges.mean;
  ev.rpca_converged = cell.rpca.converged;
  ev.rpca_iterations = cell.rpca.iterations;
  for (Eigen::Index j = 0; j < cell.scores.size(); ++j) {
    const double s = params.two_sided ? std::abs(cell.scores(j)) : cell.scores(j);
    if (s > params.threshold) ev.flagged_cells.push_back(static_cast<std::size_t>(j));
  }
  ev.inconsistent_count = ev.flagged_cells.size();
  ev.scores = std::move(cell.scores);
  return ev;
}

}  // namespace bessom
