#pragma once

// Robust PCA: A = L + S with L low rank and S sparse, solved through the
// convex relaxation min ||L||_* + lambda ||S||_1 s.t. L + S = A by an inexact
// augmented-Lagrangian alternating-direction scheme.

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "bessom/error.hpp"

namespace bessom {

struct RpcaParams {
  /// Sparsity weight; 1/sqrt(max(n, m)) when unset.
  std::optional<double> lambda;
  /// Initial penalty; 1.25 / sigma_max(A) when unset.
  std::optional<double> mu_init;
  double rho = 1.5;
  double tol = 1e-7;
  int max_iter = 500;

  void validate() const {
    if (lambda && !(*lambda > 0)) throw ValidationError("rpca lambda must be > 0");
    if (mu_init && !(*mu_init > 0)) throw ValidationError("rpca mu_init must be > 0");
    if (!(rho > 1)) throw ValidationError("rpca rho must be > 1");
    if (!(tol > 0 && tol < 1)) throw ValidationError("rpca tol must lie in (0, 1)");
    if (max_iter < 1) throw ValidationError("rpca max_iter must be >= 1");
  }
};

struct RpcaResult {
  Eigen::MatrixXd low_rank;
  Eigen::MatrixXd sparse;
  int iterations = 0;
  /// ||A - L - S||_F / ||A||_F at exit.
  double residual = 0.0;
  bool converged = false;
};

namespace detail {

inline Eigen::MatrixXd soft_threshold(const Eigen::MatrixXd& x, double tau) {
  return x.unaryExpr([tau](double v) { return v > tau ? v - tau : (v < -tau ? v + tau : 0.0); });
}

inline double spectral_norm(const Eigen::MatrixXd& a) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

}  // namespace detail

/// Non-convergence is reported through `converged`, not thrown.
inline RpcaResult rpca_decompose(const Eigen::MatrixXd& a, const RpcaParams& params = {}) {
  params.validate();
  if (std::min(a.rows(), a.cols()) < 2) throw ValidationError("rpca needs at least a 2x2 matrix");
  if (!a.allFinite()) throw ValidationError("rpca input contains non-finite values");

  const Eigen::Index n = a.rows(), m = a.cols();
  RpcaResult r;
  r.low_rank = Eigen::MatrixXd::Zero(n, m);
  r.sparse = Eigen::MatrixXd::Zero(n, m);

  const double norm_fro = a.norm();
  if (norm_fro == 0.0) {
    r.converged = true;
    return r;
  }

  const double lambda = params.lambda.value_or(1.0 / std::sqrt(static_cast<double>(std::max(n, m))));
  const double norm_two = detail::spectral_norm(a);
  const double norm_inf = a.cwiseAbs().maxCoeff() / lambda;
  Eigen::MatrixXd dual = a / std::max(norm_two, norm_inf);
  double mu = params.mu_init.value_or(1.25 / norm_two);
  const double mu_max = mu * 1e7;

  Eigen::MatrixXd& low = r.low_rank;
  Eigen::MatrixXd& sparse = r.sparse;
  for (int it = 1; it <= params.max_iter; ++it) {
    sparse = detail::soft_threshold(a - low + dual / mu, lambda / mu);

    Eigen::BDCSVD<Eigen::MatrixXd> svd(a - sparse + dual / mu, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double shrink = 1.0 / mu;
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > shrink) ++rank;
    if (rank == 0) {
      low.setZero();
    } else {
      const Eigen::VectorXd kept = (sv.head(rank).array() - shrink).matrix();
      low.noalias() = svd.matrixU().leftCols(rank) * kept.asDiagonal() * svd.matrixV().leftCols(rank).transpose();
    }

    const Eigen::MatrixXd gap = a - low - sparse;
    dual += mu * gap;
    mu = std::min(mu * params.rho, mu_max);

    r.iterations = it;
    r.residual = gap.norm() / norm_fro;
    if (r.residual <= params.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

}  // namespace bessom
