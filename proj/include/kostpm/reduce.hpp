#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kostpm/basis.hpp"
#include "kostpm/dynamics.hpp"
#include "kostpm/error.hpp"
#include "kostpm/updf.hpp"

namespace kostpm {

/// N x C(n+order, n) matrix of raw monomials, columns in graded-lex order.
struct DesignMatrix {
  Matrix matrix;
  std::vector<MultiIndex> monomials;
};

inline DesignMatrix build_design_matrix(const Matrix& samples, int order) {
  detail::require(order >= 0, "build_design_matrix: order must be >= 0");
  const auto n = static_cast<std::size_t>(samples.rows());
  DesignMatrix out;
  out.monomials = enumerate_indices(n, order);
  out.matrix.resize(samples.cols(), static_cast<Eigen::Index>(out.monomials.size()));
  for (Eigen::Index r = 0; r < samples.cols(); ++r) {
    for (std::size_t k = 0; k < out.monomials.size(); ++k) {
      double v = 1.0;
      for (std::size_t d = 0; d < n; ++d) {
        v *= std::pow(samples(static_cast<Eigen::Index>(d), r), out.monomials[k].exponents[d]);
      }
      out.matrix(r, static_cast<Eigen::Index>(k)) = v;
    }
  }
  return out;
}

struct FitResult {
  Vector coefficients;
  double residual_rms = 0.0;
  Eigen::Index rank = 0;
  double condition = 1.0;  // |R_00| / |R_mm| of the pivoted QR
};

/// Least-squares c minimizing ||p - Xi c||^2 by column-pivoted QR. Rank
/// deficiency beyond the cutoff is an error.
inline FitResult fit_coefficients(const Matrix& design, const Vector& p, double cutoff = kPinvCutoff) {
  detail::require(design.rows() == p.size(), "fit_coefficients: one realization per design row required");
  detail::require(design.rows() >= design.cols(), "fit_coefficients: fewer samples than coefficients");
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(cutoff);
  FitResult out;
  out.rank = qr.rank();
  const auto diag = qr.matrixR().diagonal().cwiseAbs();
  out.condition = diag[diag.size() - 1] > 0.0 ? diag[0] / diag[diag.size() - 1] : INFINITY;
  if (out.rank < design.cols()) {
    std::ostringstream msg;
    msg << "fit_coefficients: design matrix rank " << out.rank << " < " << design.cols()
        << " coefficients; use more samples or a lower order";
    throw NumericError(msg.str());
  }
  out.coefficients = qr.solve(p);
  out.residual_rms = std::sqrt((p - design * out.coefficients).squaredNorm() / static_cast<double>(p.size()));
  return out;
}

/// Explicit normal-equation solve (Xi^T Xi)^{-1} Xi^T p.
inline Vector fit_coefficients_normal_equations(const Matrix& design, const Vector& p) {
  const Matrix gram = design.transpose() * design;
  return gram.ldlt().solve(design.transpose() * p);
}

struct ReductionConfig {
  int order = 4;
  std::size_t samples = 0;  // 0: 20 x number of monomials
  std::uint64_t seed = 0;
  BoxDomain region;
  /// Only points where f exceeds this level are kept (uniform on the
  /// super-level set inside the region); unset samples the whole box.
  std::optional<double> level;
  double holdout_fraction = 0.2;

  [[nodiscard]] std::size_t monomial_count() const {
    return enumerate_indices(region.dimension(), order).size();
  }
  [[nodiscard]] std::size_t resolved_samples() const {
    return samples == 0 ? 20 * monomial_count() : samples;
  }

  /// Checks order >= 1, order < 2*source_order (when given), and that the
  /// training part holds at least one sample per monomial.
  void validate(std::optional<int> source_order = std::nullopt) const {
    detail::require(region.dimension() > 0, "ReductionConfig: region is not set");
    detail::require(order >= 1, "ReductionConfig: order must be >= 1");
    if (source_order) {
      detail::require(order < 2 * *source_order, "ReductionConfig: order must be < 2 * map order");
    }
    detail::require(holdout_fraction >= 0.0 && holdout_fraction < 1.0,
                    "ReductionConfig: holdout fraction must be in [0, 1)");
    const std::size_t total = resolved_samples();
    const auto train = total - static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(total)));
    detail::require(train >= monomial_count(), "ReductionConfig: need at least one training sample per monomial");
  }
};

/// Bounding box of the grid points where a log-density exceeds peak - cut,
/// padded by one grid spacing per axis.
struct SupportRegion {
  BoxDomain region;
  double peak = 0.0;
  double level = 0.0;
};

inline SupportRegion find_support_region(const GridAxes& axes, const Vector& log_values, double cut = 25.0) {
  const Matrix pts = grid_points(axes);
  detail::require(pts.cols() == log_values.size(), "find_support_region: value count does not match the grid");
  SupportRegion out;
  out.peak = log_values.maxCoeff();
  out.level = out.peak - cut;
  const auto n = pts.rows();
  Vector lo = Vector::Constant(n, INFINITY);
  Vector hi = Vector::Constant(n, -INFINITY);
  for (Eigen::Index k = 0; k < pts.cols(); ++k) {
    if (log_values[k] > out.level) {
      lo = lo.cwiseMin(pts.col(k));
      hi = hi.cwiseMax(pts.col(k));
    }
  }
  for (Eigen::Index d = 0; d < n; ++d) {
    const auto& axis = axes[static_cast<std::size_t>(d)];
    const double spacing = (axis.back() - axis.front()) / static_cast<double>(axis.size() - 1);
    lo[d] -= spacing;
    hi[d] += spacing;
  }
  out.region = BoxDomain(lo, hi);
  return out;
}

namespace detail {

/// Re-expresses sum_k a_k prod_d ((x_d - c_d)/h_d)^{e_kd} in raw monomials.
inline Vector scaled_to_raw(const std::vector<MultiIndex>& monomials, const Vector& scaled, const Vector& center,
                            const Vector& half_width) {
  std::map<std::vector<int>, std::size_t> position;
  for (std::size_t k = 0; k < monomials.size(); ++k) {
    position[monomials[k].exponents] = k;
  }
  const std::size_t n = static_cast<std::size_t>(center.size());
  Vector raw = Vector::Zero(scaled.size());
  for (std::size_t k = 0; k < monomials.size(); ++k) {
    const auto& e = monomials[k].exponents;
    // Per-axis binomial expansions of ((x - c)/h)^e.
    std::vector<std::vector<double>> factors(n);
    for (std::size_t d = 0; d < n; ++d) {
      const auto dd = static_cast<Eigen::Index>(d);
      factors[d].assign(static_cast<std::size_t>(e[d] + 1), 0.0);
      const double inv_h = std::pow(1.0 / half_width[dd], e[d]);
      double binom = 1.0;
      for (int j = 0; j <= e[d]; ++j) {
        factors[d][static_cast<std::size_t>(j)] = binom * std::pow(-center[dd], e[d] - j) * inv_h;
        binom = binom * (e[d] - j) / (j + 1);
      }
    }
    std::vector<int> j(n, 0);
    while (true) {
      double term = scaled[static_cast<Eigen::Index>(k)];
      for (std::size_t d = 0; d < n; ++d) {
        term *= factors[d][static_cast<std::size_t>(j[d])];
      }
      raw[static_cast<Eigen::Index>(position.at(j))] += term;
      std::size_t d = 0;
      while (d < n && ++j[d] > e[d]) {
        j[d] = 0;
        ++d;
      }
      if (d == n) {
        break;
      }
    }
  }
  return raw;
}

}  // namespace detail

struct ReductionResult {
  PolyLogPdf pdf;
  double train_rms = 0.0;
  double holdout_rms = 0.0;
  /// holdout RMS divided by the range of the sampled log-density values
  double holdout_relative_rms = 0.0;
  double value_range = 0.0;
  std::size_t train_count = 0;
  std::size_t holdout_count = 0;
  std::size_t candidates = 0;
  Eigen::Index rank = 0;
  double condition = 1.0;
};

/// Fits an order-`order` raw-monomial polynomial to samples of a log-density
/// drawn uniformly in the configured region. Samples are rescaled to [-1,1]^n
/// for the fit and the coefficients mapped back.
inline ReductionResult reduce_logpdf(const ScalarField& f, const ReductionConfig& cfg,
                                     std::optional<int> source_order = std::nullopt) {
  cfg.validate(source_order);
  const BoxDomain& region = cfg.region;
  const auto n = static_cast<Eigen::Index>(region.dimension());
  const std::size_t total = cfg.resolved_samples();
  const std::size_t max_candidates = 10000 * total;

  Matrix samples(n, static_cast<Eigen::Index>(total));
  Vector values(static_cast<Eigen::Index>(total));
  std::size_t accepted = 0;
  std::size_t candidate = 0;
  while (accepted < total) {
    if (candidate >= max_candidates) {
      throw NumericError("reduce_logpdf: could not draw enough samples above the support level");
    }
    auto engine = sample_engine(cfg.seed, candidate++);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector x(n);
    for (Eigen::Index d = 0; d < n; ++d) {
      x[d] = region.lower()[d] + (region.upper()[d] - region.lower()[d]) * unit(engine);
    }
    const double v = f(x);
    if (!std::isfinite(v)) {
      throw NumericError("reduce_logpdf: log-density is not finite inside the region");
    }
    if (cfg.level && !(v > *cfg.level)) {
      continue;
    }
    samples.col(static_cast<Eigen::Index>(accepted)) = x;
    values[static_cast<Eigen::Index>(accepted)] = v;
    ++accepted;
  }

  const auto holdout = static_cast<Eigen::Index>(std::floor(cfg.holdout_fraction * static_cast<double>(total)));
  const auto train = static_cast<Eigen::Index>(total) - holdout;
  const Vector center = region.center();
  const Vector half = region.half_width();
  Matrix scaled(n, static_cast<Eigen::Index>(total));
  for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
    scaled.col(c) = ((samples.col(c) - center).array() / half.array()).matrix();
  }
  const DesignMatrix design = build_design_matrix(scaled, cfg.order);
  const FitResult fit = fit_coefficients(design.matrix.topRows(train), values.head(train));

  ReductionResult out;
  out.train_rms = fit.residual_rms;
  out.rank = fit.rank;
  out.condition = fit.condition;
  out.train_count = static_cast<std::size_t>(train);
  out.holdout_count = static_cast<std::size_t>(holdout);
  out.candidates = candidate;
  out.value_range = values.maxCoeff() - values.minCoeff();
  if (holdout > 0) {
    const Vector r = values.tail(holdout) - design.matrix.bottomRows(holdout) * fit.coefficients;
    out.holdout_rms = std::sqrt(r.squaredNorm() / static_cast<double>(holdout));
    out.holdout_relative_rms = out.value_range > 0.0 ? out.holdout_rms / out.value_range : 0.0;
  }
  out.pdf.monomials = design.monomials;
  out.pdf.coefficients = detail::scaled_to_raw(design.monomials, fit.coefficients, center, half);
  out.pdf.region = region;
  out.pdf.modulo_constant = true;
  out.pdf.floor = cfg.level;
  return out;
}

}  // namespace kostpm
