#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "kostpm/dynamics.hpp"

using namespace kostpm;

TEST(DuffingRhs, Equilibrium) {
  EXPECT_EQ(duffing_rhs(Eigen::Vector2d(0, 0), DuffingParams{}), Eigen::Vector2d(0, 0));
}

TEST(DuffingRhs, UnitDisplacement) {
  const Eigen::Vector2d f = duffing_rhs(Eigen::Vector2d(1, 0), DuffingParams{});
  EXPECT_DOUBLE_EQ(f[0], 0.0);
  EXPECT_NEAR(f[1], -1.01, 1e-15);
}

TEST(DuffingRhs, PriorMean) {
  const Eigen::Vector2d f = duffing_rhs(Eigen::Vector2d(0.4, 0.6), DuffingParams{});
  EXPECT_NEAR(f[0], 0.6, 1e-15);
  EXPECT_NEAR(f[1], -0.4 - 0.01 * 0.064, 1e-15);
}

TEST(DuffingParams, RejectsInvalid) {
  DuffingParams p;
  p.mass = 0.0;
  EXPECT_THROW(make_duffing(p), InvalidArgument);
  p = DuffingParams{};
  p.stiffness = -1.0;
  EXPECT_THROW(make_duffing(p), InvalidArgument);
  p = DuffingParams{};
  p.epsilon = -0.1;
  EXPECT_THROW(make_duffing(p), InvalidArgument);
}

TEST(Integrate, HarmonicPeriod) {
  const SystemModel sys = make_harmonic_oscillator();
  const Vector x = integrate(sys, Eigen::Vector2d(1, 0), 0.0, 2 * std::numbers::pi);
  EXPECT_LT((x - Eigen::Vector2d(1, 0)).norm(), 1e-8);
}

TEST(Integrate, ZeroSpanReturnsInitialStateExactly) {
  const SystemModel sys = make_duffing(DuffingParams{});
  const Vector x0 = Eigen::Vector2d(0.123, -0.456);
  const Vector x = integrate(sys, x0, 3.0, 3.0);
  EXPECT_EQ(x, x0);
}

TEST(Integrate, ForwardThenBackward) {
  const SystemModel sys = make_duffing(DuffingParams{});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x0 = Eigen::Vector2d(u(rng), u(rng));
    const Vector xf = integrate(sys, x0, 0.0, 25.0);
    EXPECT_LT((integrate(sys, xf, 25.0, 0.0) - x0).norm(), 1e-8);
  }
}

TEST(Integrate, Deterministic) {
  const SystemModel sys = make_duffing(DuffingParams{});
  const Vector a = integrate(sys, Eigen::Vector2d(0.4, 0.6), 0.0, 50.0);
  const Vector b = integrate(sys, Eigen::Vector2d(0.4, 0.6), 0.0, 50.0);
  EXPECT_EQ(a, b);
}

TEST(Integrate, EnergyConservedOver500Seconds) {
  const DuffingParams p;
  const SystemModel sys = make_duffing(p);
  for (const Eigen::Vector2d x0 : {Eigen::Vector2d(0.4, 0.6), Eigen::Vector2d(-0.9, 0.2), Eigen::Vector2d(1.0, 1.0)}) {
    const double e0 = duffing_energy(x0, p);
    const Vector xf = integrate(sys, x0, 0.0, 500.0);
    EXPECT_LT(std::abs(duffing_energy(xf, p) - e0) / e0, 1e-8);
  }
}

TEST(SystemModel, DuffingJacobianTraceVanishes) {
  const SystemModel sys = make_duffing(DuffingParams{});
  EXPECT_TRUE(sys.hamiltonian);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    EXPECT_LT(std::abs(jacobian_trace(sys, Eigen::Vector2d(u(rng), u(rng)))), 1e-8);
  }
}

TEST(GenerateSnapshots, RefusesZeroAndUnderdetermined) {
  const SystemModel sys = make_duffing(DuffingParams{});
  const auto box = BoxDomain::cube(2, -1, 1);
  EXPECT_THROW(generate_snapshots(sys, box, 0, 0.1, 1), InvalidArgument);
  EXPECT_THROW(generate_snapshots(sys, box, 54, 0.1, 1, 55), InvalidArgument);
}

TEST(GenerateSnapshots, SeededBitIdentical) {
  const SystemModel sys = make_duffing(DuffingParams{});
  const auto box = BoxDomain::cube(2, -1.1, 1.1);
  const SnapshotSet a = generate_snapshots(sys, box, 500, 0.1, 99);
  const SnapshotSet b = generate_snapshots(sys, box, 500, 0.1, 99);
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.Y, b.Y);
  const SnapshotSet c = generate_snapshots(sys, box, 500, 0.1, 100);
  EXPECT_NE(a.X, c.X);
}

TEST(GenerateSnapshots, PrefixStableAcrossCounts) {
  const SystemModel sys = make_duffing(DuffingParams{});
  const auto box = BoxDomain::cube(2, -1.1, 1.1);
  const SnapshotSet small = generate_snapshots(sys, box, 100, 0.1, 7);
  const SnapshotSet large = generate_snapshots(sys, box, 300, 0.1, 7);
  EXPECT_EQ(small.X, large.X.leftCols(100));
}

TEST(GenerateSnapshots, PairsConsistentWithIntegratorAndInsideBox) {
  const SystemModel sys = make_duffing(DuffingParams{});
  const auto box = BoxDomain::cube(2, -1.1, 1.1);
  const SnapshotSet snap = generate_snapshots(sys, box, 10000, 0.1, 42);
  ASSERT_EQ(snap.size(), 10000u);
  for (Eigen::Index m = 0; m < snap.X.cols(); ++m) {
    ASSERT_TRUE(box.contains(snap.X.col(m)));
  }
  for (Eigen::Index m = 0; m < snap.X.cols(); m += 100) {
    const Vector y = integrate(sys, snap.X.col(m), 0.0, 0.1, 1e-13);
    EXPECT_LT((y - snap.Y.col(m)).norm(), 1e-10);
  }
}

TEST(HarmonicFlowMatrix, MatchesIntegrator) {
  DuffingParams p;
  p.epsilon = 0.0;
  p.mass = 2.0;
  p.stiffness = 0.5;
  const SystemModel sys = make_duffing(p);
  const Vector x0 = Eigen::Vector2d(0.3, -0.2);
  for (double t : {0.5, 3.0, 10.0}) {
    EXPECT_LT((harmonic_flow_matrix(p, t) * x0 - integrate(sys, x0, 0.0, t)).norm(), 1e-9);
  }
}
