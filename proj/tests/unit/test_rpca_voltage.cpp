#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "bessom/bessom.hpp"
#include "scenarios.hpp"

namespace {

double rel_err(const Eigen::MatrixXd& x, const Eigen::MatrixXd& ref) { return (x - ref).norm() / ref.norm(); }

TEST(Rpca, UncorruptedRankOneIsRecoveredWithEmptySparsePart) {
  scen::Gen g(1);
  const auto c = scen::low_rank_case(40, 200, 1, 0.0, 0.0, g);
  const auto r = bessom::rpca_decompose(c.a);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.sparse.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(rel_err(r.low_rank, c.l0), 1e-6);
}

TEST(Rpca, RankOneWithSparseSpikes) {
  scen::Gen g(2);
  const auto c = scen::low_rank_case(40, 200, 1, 0.05, 0.5, g);
  const auto r = bessom::rpca_decompose(c.a);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(rel_err(r.low_rank, c.l0), 1e-3);
}

TEST(Rpca, RankTwoWithSparseSpikes) {
  scen::Gen g(3);
  const auto c = scen::low_rank_case(40, 200, 2, 0.05, 0.5, g);
  const auto r = bessom::rpca_decompose(c.a);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.iterations, 500);
  EXPECT_LE(r.residual, 1e-7);
  EXPECT_LT(rel_err(r.low_rank, c.l0), 1e-3);
  EXPECT_LT(rel_err(r.sparse, c.s0), 1e-2);
}

TEST(Rpca, ZeroMatrixNeedsNoIterations) {
  const auto r = bessom::rpca_decompose(Eigen::MatrixXd::Zero(5, 7));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.low_rank.isZero(0.0));
  EXPECT_TRUE(r.sparse.isZero(0.0));
}

TEST(Rpca, RejectsBadInput) {
  EXPECT_THROW(bessom::rpca_decompose(Eigen::MatrixXd::Ones(1, 5)), bessom::ValidationError);
  Eigen::MatrixXd a = Eigen::MatrixXd::Ones(3, 3);
  a(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(bessom::rpca_decompose(a), bessom::ValidationError);
  bessom::RpcaParams p;
  p.rho = 1.0;
  EXPECT_THROW(bessom::rpca_decompose(Eigen::MatrixXd::Ones(3, 3), p), bessom::ValidationError);
}

TEST(RpcaProperty, ConvergedFlagMatchesResidualAndIterationBudget) {
  scen::Gen g(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rows = g.integer(3, 30), cols = g.integer(3, 30);
    Eigen::MatrixXd a(rows, cols);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g.normal();
    bessom::RpcaParams p;
    p.max_iter = g.integer(1, 60);
    const auto r = bessom::rpca_decompose(a, p);
    EXPECT_TRUE(r.residual <= p.tol || r.iterations == p.max_iter);
    EXPECT_EQ(r.converged, r.residual <= p.tol);
    EXPECT_NEAR(r.residual, (a - r.low_rank - r.sparse).norm() / a.norm(), 1e-12);
  }
}

TEST(VoltageRanges, HandValues) {
  Eigen::MatrixXd a(2, 2);
  a << 3.2, 3.3, 3.2, 3.25;
  const auto s = bessom::voltage_ranges(a);
  EXPECT_NEAR(s.max, 0.1, 1e-12);
  EXPECT_NEAR(s.mean, 0.075, 1e-12);
  const auto z = bessom::voltage_ranges(Eigen::MatrixXd::Constant(4, 3, 3.3));
  EXPECT_EQ(z.max, 0.0);
  EXPECT_EQ(z.mean, 0.0);
}

TEST(VoltageRangesProperty, ShiftInvariantScaleLinearAndOrdered) {
  scen::Gen g(5);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd a(g.integer(1, 20), g.integer(2, 20));
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g.uniform(3.0, 3.4);
    const auto s = bessom::voltage_ranges(a);
    EXPECT_GE(s.max, s.mean);
    const auto shifted = bessom::voltage_ranges((a.array() + 0.5).matrix());
    EXPECT_NEAR(shifted.max, s.max, 1e-12);
    EXPECT_NEAR(shifted.mean, s.mean, 1e-12);
    const double k = g.uniform(0.1, 10);
    const auto scaled = bessom::voltage_ranges(k * a);
    EXPECT_NEAR(scaled.max, k * s.max, 1e-12 * k);
    EXPECT_NEAR(scaled.mean, k * s.mean, 1e-12 * k);
  }
}

TEST(CellScores, IdenticalColumnsAreDegenerate) {
  Eigen::MatrixXd a(50, 6);
  for (Eigen::Index k = 0; k < 50; ++k) a.row(k).setConstant(3.3 - 0.001 * static_cast<double>(k));
  const auto s = bessom::inconsistency_scores(a);
  EXPECT_TRUE(s.degenerate);
  EXPECT_TRUE(s.scores.isZero(0.0));
  EXPECT_EQ(bessom::evaluate_pack_voltage(a).inconsistent_count, 0u);
}

TEST(CellScores, OffsetColumnHasUniqueMaximum) {
  Eigen::MatrixXd a(500, 11);
  for (Eigen::Index k = 0; k < 500; ++k) a.row(k).setConstant(3.35 - 0.0002 * static_cast<double>(k));
  a.col(7).array() += 0.1;
  const auto s = bessom::inconsistency_scores(a);
  Eigen::Index arg = 0;
  s.scores.cwiseAbs().maxCoeff(&arg);
  EXPECT_EQ(arg, 7);
  for (Eigen::Index j = 0; j < 11; ++j) {
    if (j != 7) {
      EXPECT_LT(std::abs(s.scores(j)), std::abs(s.scores(7)));
    }
  }
}

TEST(CellScores, SeededDeviantsAreExactlyTheFlaggedSet) {
  scen::Gen g(6);
  const auto a = scen::pack_voltages(240, 396, {{16, 0.08}, {250, 0.10}, {101, 0.12}}, g);
  const auto ev = bessom::evaluate_pack_voltage(a);
  EXPECT_EQ(ev.flagged_cells, (std::vector<std::size_t>{16, 101, 250}));
  EXPECT_EQ(ev.inconsistent_count, 3u);
  EXPECT_NEAR(ev.scores.mean(), 0.0, 1e-9);
  EXPECT_NEAR(std::sqrt((ev.scores.array() - ev.scores.mean()).square().mean()), 1.0, 1e-9);
}

TEST(CellScoresProperty, NormalizedAndPermutationEquivariant) {
  scen::Gen g(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index m = g.integer(5, 60);
    std::vector<std::pair<Eigen::Index, double>> dev{{static_cast<Eigen::Index>(g.index(m)), g.uniform(0.03, 0.1)}};
    const auto a = scen::pack_voltages(g.integer(20, 80), m, dev, g);
    const auto s = bessom::inconsistency_scores(a);
    ASSERT_FALSE(s.degenerate);
    EXPECT_NEAR(s.scores.mean(), 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt((s.scores.array() - s.scores.mean()).square().mean()), 1.0, 1e-9);

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g.engine());
    Eigen::MatrixXd b(a.rows(), m);
    for (Eigen::Index j = 0; j < m; ++j) b.col(j) = a.col(perm[static_cast<std::size_t>(j)]);
    const auto t = bessom::inconsistency_scores(b);
    for (Eigen::Index j = 0; j < m; ++j) EXPECT_NEAR(t.scores(j), s.scores(perm[static_cast<std::size_t>(j)]), 1e-6);
  }
}

TEST(Voltage, TwoSidedFlagsLowCells) {
  scen::Gen g(8);
  const auto a = scen::pack_voltages(100, 120, {{5, -0.1}}, g);
  EXPECT_TRUE(bessom::evaluate_pack_voltage(a).flagged_cells.empty());
  bessom::VoltageEvalParams p;
  p.two_sided = true;
  EXPECT_EQ(bessom::evaluate_pack_voltage(a, p).flagged_cells, (std::vector<std::size_t>{5}));
}

TEST(Voltage, DecimationKeepsEndpointsAndDeviants) {
  Eigen::MatrixXd a(1000, 3);
  for (Eigen::Index k = 0; k < 1000; ++k) a.row(k).setConstant(static_cast<double>(k));
  const auto d = bessom::detail::decimate_rows(a, 240);
  ASSERT_EQ(d.rows(), 240);
  EXPECT_EQ(d(0, 0), 0.0);
  EXPECT_EQ(d(239, 0), 999.0);
  EXPECT_EQ(bessom::detail::decimate_rows(a, 0).rows(), 1000);

  scen::Gen g(9);
  const auto v = scen::pack_voltages(900, 396, {{16, 0.08}, {250, 0.10}, {101, 0.12}}, g);
  bessom::VoltageEvalParams p;
  p.max_rpca_rows = 240;
  EXPECT_EQ(bessom::evaluate_pack_voltage(v, p).flagged_cells, (std::vector<std::size_t>{16, 101, 250}));
}

}  // namespace
