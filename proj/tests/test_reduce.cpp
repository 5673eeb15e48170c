#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "kostpm/reduce.hpp"

using namespace kostpm;

namespace {

const GaussianPdf kPrior(Eigen::Vector2d(0.4, 0.6), 0.01 * Matrix::Identity(2, 2));

PolyLogPdf random_quartic(std::uint64_t seed, const BoxDomain& region) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  PolyLogPdf p;
  p.monomials = enumerate_indices(2, 4);
  p.coefficients.resize(15);
  for (Eigen::Index k = 0; k < 15; ++k) p.coefficients[k] = g(rng);
  p.region = region;
  return p;
}

ReductionConfig config(const BoxDomain& region, int order, std::size_t samples, std::uint64_t seed = 42) {
  ReductionConfig rc;
  rc.order = order;
  rc.samples = samples;
  rc.seed = seed;
  rc.region = region;
  return rc;
}

struct DuffingLeg {
  KoopmanModel model =
      build_galerkin_model(make_duffing(DuffingParams{}), BasisSet(BoxDomain::cube(2, -1.1, 1.1), 9));
  PolyLogPdf zeta = log_gaussian(kPrior);
  SupportRegion support;
  ScalarField field;

  DuffingLeg() {
    const GridAxes axes{linspace(-1.5, 1.5, 151), linspace(-1.5, 1.5, 151)};
    support = find_support_region(axes, propagate_inverse_batch(model, zeta, 250.0, grid_points(axes)));
    field = [this](const Vector& x) { return zeta(inverse_flow(model, x, 250.0).value); };
  }

  [[nodiscard]] ReductionConfig cfg(int order, std::size_t samples = 0) const {
    ReductionConfig rc = config(support.region, order, samples);
    rc.level = support.level;
    return rc;
  }
};

}  // namespace

TEST(DesignMatrix, UnivariateLinear) {
  Matrix s(1, 2);
  s << 0, 1;
  const DesignMatrix d = build_design_matrix(s, 1);
  EXPECT_EQ(d.matrix, (Matrix(2, 2) << 1, 0, 1, 1).finished());
}

TEST(DesignMatrix, BivariateQuadraticRow) {
  const DesignMatrix d = build_design_matrix(Eigen::Vector2d(2, 3), 2);
  EXPECT_EQ(d.matrix, (Matrix(1, 6) << 1, 2, 3, 4, 6, 9).finished());
}

TEST(DesignMatrix, ShapeAndConstantColumn) {
  Matrix s = Matrix::Random(2, 100);
  const DesignMatrix d = build_design_matrix(s, 4);
  EXPECT_EQ(d.matrix.rows(), 100);
  EXPECT_EQ(d.matrix.cols(), 15);
  EXPECT_EQ(d.matrix.col(0), Vector::Ones(100));
}

TEST(FitCoefficients, RecoversPolynomialExactly) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix s(2, 60);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = u(rng);
  const DesignMatrix d = build_design_matrix(s, 3);
  Vector c(10);
  c << 0.5, -1, 2, 0.3, 0.0, -0.7, 1.1, 0.2, -0.4, 0.9;
  const FitResult fit = fit_coefficients(d.matrix, d.matrix * c);
  EXPECT_LT((fit.coefficients - c).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(fit.residual_rms, 1e-12);
}

TEST(FitCoefficients, ZeroDataGivesZero) {
  const DesignMatrix d = build_design_matrix(Matrix::Random(2, 40), 2);
  EXPECT_EQ(fit_coefficients(d.matrix, Vector::Zero(40)).coefficients, Vector::Zero(6));
}

TEST(FitCoefficients, RankDeficientFails) {
  Matrix s(2, 30);
  s.row(0).setLinSpaced(-1, 1);
  s.row(1) = s.row(0);
  const DesignMatrix d = build_design_matrix(s, 2);
  EXPECT_THROW(fit_coefficients(d.matrix, Vector::Ones(30)), NumericError);
}

TEST(FitCoefficients, NormalEquationsAgree) {
  const DesignMatrix d = build_design_matrix(Matrix::Random(2, 200), 4);
  const Vector p = Vector::Random(200);
  EXPECT_LT((fit_coefficients(d.matrix, p).coefficients - fit_coefficients_normal_equations(d.matrix, p)).norm(), 1e-8);
}

TEST(ReductionConfig, ValidatesOrderAndSampleCount) {
  ReductionConfig rc = config(BoxDomain::cube(2, -1, 1), 4, 0);
  EXPECT_EQ(rc.resolved_samples(), 300u);
  EXPECT_NO_THROW(rc.validate(9));
  rc.order = 18;
  EXPECT_THROW(rc.validate(9), InvalidArgument);
  rc.order = 0;
  EXPECT_THROW(rc.validate(), InvalidArgument);
  rc = config(BoxDomain::cube(2, -1, 1), 4, 16);
  EXPECT_THROW(rc.validate(), InvalidArgument);
}

TEST(ReduceLogpdf, IdempotentOnModelClass) {
  const BoxDomain region(Eigen::Vector2d(-0.5, 0.1), Eigen::Vector2d(1.2, 1.3));
  const PolyLogPdf p = random_quartic(3, region);
  const ReductionResult r = reduce_logpdf(p, config(region, 4, 0));
  EXPECT_LT((r.pdf.coefficients - p.coefficients).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ReduceLogpdf, RecoversGaussianQuadratic) {
  const PolyLogPdf z = log_gaussian(kPrior);
  const ReductionResult r = reduce_logpdf(z, config(z.region, 2, 50));
  EXPECT_LT((r.pdf.coefficients - z.coefficients).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(r.train_count, 40u);
  EXPECT_EQ(r.holdout_count, 10u);
}

TEST(ReduceLogpdf, ReduceTwiceIsReduceOnce) {
  DuffingLeg leg;
  const ReductionConfig rc = leg.cfg(4);
  const ReductionResult once = reduce_logpdf(leg.field, rc);
  const ReductionResult twice = reduce_logpdf(once.pdf, rc);
  EXPECT_LT((twice.pdf.coefficients - once.pdf.coefficients).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ReduceLogpdf, SeededBitIdentical) {
  DuffingLeg leg;
  const ReductionResult a = reduce_logpdf(leg.field, leg.cfg(4));
  const ReductionResult b = reduce_logpdf(leg.field, leg.cfg(4));
  EXPECT_EQ(a.pdf.coefficients, b.pdf.coefficients);
  EXPECT_EQ(a.holdout_rms, b.holdout_rms);
}

TEST(ReduceLogpdf, FloorAppliesOnlyOutsideRegion) {
  DuffingLeg leg;
  const ReductionResult r = reduce_logpdf(leg.field, leg.cfg(4));
  ASSERT_TRUE(r.pdf.floor.has_value());
  const Vector inside = r.pdf.region.center();
  EXPECT_EQ(r.pdf(inside), r.pdf.polynomial(inside));
  const Vector outside = r.pdf.region.upper() + Vector::Constant(2, 0.5);
  EXPECT_LE(r.pdf(outside), *r.pdf.floor);
}

TEST(ReduceLogpdf, DuffingQuarticResidualBelowOnePercent) {
  DuffingLeg leg;
  const ReductionResult r = reduce_logpdf(leg.field, leg.cfg(4, 5000));
  EXPECT_LT(r.holdout_relative_rms, 0.01) << "holdout RMS " << r.holdout_rms << " over range " << r.value_range;
}

TEST(ReduceLogpdf, HoldoutErrorNonIncreasingInOrder) {
  DuffingLeg leg;
  double previous = INFINITY;
  for (int w = 2; w <= 6; ++w) {
    const ReductionResult r = reduce_logpdf(leg.field, leg.cfg(w, 1000));
    EXPECT_LE(r.holdout_rms, previous) << "order " << w;
    previous = r.holdout_rms;
  }
}

TEST(FindSupportRegion, BoundsSuperLevelSet) {
  const GridAxes axes{linspace(-1.5, 1.5, 151), linspace(-1.5, 1.5, 151)};
  const PolyLogPdf z = log_gaussian(kPrior);
  Vector values(151 * 151);
  const Matrix pts = grid_points(axes);
  for (Eigen::Index c = 0; c < pts.cols(); ++c) values[c] = z(pts.col(c));
  const SupportRegion s = find_support_region(axes, values, 25.0);
  // -|x-mu|^2 / (2 sigma^2) > -25  <=>  |x-mu| < sqrt(50) sigma
  const double r = std::sqrt(50.0) * 0.1;
  for (Eigen::Index d = 0; d < 2; ++d) {
    EXPECT_NEAR(s.region.lower()[d], kPrior.mean()[d] - r, 0.041);
    EXPECT_NEAR(s.region.upper()[d], kPrior.mean()[d] + r, 0.041);
  }
  EXPECT_NEAR(s.level, -25.0, 1e-12);
}
