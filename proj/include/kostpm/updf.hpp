#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kostpm/basis.hpp"
#include "kostpm/error.hpp"
#include "kostpm/koopman.hpp"

namespace kostpm {

/// Multivariate normal density.
class GaussianPdf {
 public:
  GaussianPdf(Vector mean, Matrix covariance) : mean_(std::move(mean)), covariance_(std::move(covariance)) {
    detail::require(covariance_.rows() == mean_.size() && covariance_.cols() == mean_.size(),
                    "GaussianPdf: covariance must be n x n");
    detail::require((covariance_ - covariance_.transpose()).norm() <= 1e-12 * std::max(1.0, covariance_.norm()),
                    "GaussianPdf: covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance_);
    const Vector ev = eig.eigenvalues();
    detail::require(ev.minCoeff() > 0.0, "GaussianPdf: covariance must be positive definite");
    condition_ = ev.maxCoeff() / ev.minCoeff();
    llt_ = covariance_.llt();
    precision_ = llt_.solve(Matrix::Identity(mean_.size(), mean_.size()));
    const double logdet = 2.0 * Matrix(llt_.matrixL()).diagonal().array().log().sum();
    log_normalizer_ = -0.5 * (static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi) + logdet);
  }

  static GaussianPdf isotropic(Vector mean, double sigma) {
    const auto n = mean.size();
    return {std::move(mean), sigma * sigma * Matrix::Identity(n, n)};
  }

  [[nodiscard]] std::size_t dimension() const { return static_cast<std::size_t>(mean_.size()); }
  [[nodiscard]] const Vector& mean() const { return mean_; }
  [[nodiscard]] const Matrix& covariance() const { return covariance_; }
  [[nodiscard]] const Matrix& precision() const { return precision_; }
  [[nodiscard]] double condition() const { return condition_; }
  /// Lower Cholesky factor of the covariance.
  [[nodiscard]] Matrix cholesky() const { return llt_.matrixL(); }

  /// -1/2 (x-mu)^T P^{-1} (x-mu)
  [[nodiscard]] double quadratic_form(const Eigen::Ref<const Vector>& x) const {
    const Vector d = x - mean_;
    return -0.5 * d.dot(precision_ * d);
  }
  [[nodiscard]] double log_density(const Eigen::Ref<const Vector>& x) const {
    return log_normalizer_ + quadratic_form(x);
  }
  [[nodiscard]] double operator()(const Eigen::Ref<const Vector>& x) const { return std::exp(log_density(x)); }

 private:
  Vector mean_;
  Matrix covariance_;
  Eigen::LLT<Matrix> llt_;
  Matrix precision_;
  double log_normalizer_ = 0.0;
  double condition_ = 1.0;
};

/// Log-density as a dense polynomial in raw monomials x^e, defined up to an
/// additive constant. `region` is where the polynomial was built to be valid;
/// if `floor` is set, values outside the region are capped at it.
struct PolyLogPdf {
  std::vector<MultiIndex> monomials;  // graded lex, monomials[0] = constant
  Vector coefficients;
  BoxDomain region;
  bool modulo_constant = true;
  std::optional<double> floor;

  [[nodiscard]] std::size_t dimension() const { return region.dimension(); }
  [[nodiscard]] int order() const { return monomials.empty() ? 0 : monomials.back().degree(); }

  [[nodiscard]] double polynomial(const Eigen::Ref<const Vector>& x) const {
    const std::size_t n = dimension();
    const int w = order();
    const auto stride = static_cast<std::size_t>(w + 1);
    std::vector<double> powers(n * stride);
    for (std::size_t d = 0; d < n; ++d) {
      powers[d * stride] = 1.0;
      for (std::size_t p = 1; p < stride; ++p) {
        powers[d * stride + p] = powers[d * stride + p - 1] * x[static_cast<Eigen::Index>(d)];
      }
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < monomials.size(); ++k) {
      double term = coefficients[static_cast<Eigen::Index>(k)];
      for (std::size_t d = 0; d < n; ++d) {
        term *= powers[d * stride + static_cast<std::size_t>(monomials[k].exponents[d])];
      }
      sum += term;
    }
    return sum;
  }

  [[nodiscard]] double operator()(const Eigen::Ref<const Vector>& x) const {
    const double value = polynomial(x);
    if (floor && !region.contains(x)) {
      return std::min(value, *floor);
    }
    return value;
  }
};

/// Order-2 PolyLogPdf of -1/2 (x-mu)^T P^{-1} (x-mu); zero at the mean. The
/// region is the mean +- 8 standard deviations per axis; no floor is applied.
inline PolyLogPdf log_gaussian(const GaussianPdf& g) {
  if (!(g.condition() <= 1e12)) {
    std::ostringstream msg;
    msg << "log_gaussian: covariance condition number " << g.condition() << " exceeds 1e12";
    throw NumericError(msg.str());
  }
  const std::size_t n = g.dimension();
  const Matrix& A = g.precision();
  const Vector& mu = g.mean();
  PolyLogPdf out;
  out.monomials = enumerate_indices(n, 2);
  out.coefficients = Vector::Zero(static_cast<Eigen::Index>(out.monomials.size()));
  const Vector a_mu = A * mu;
  for (std::size_t k = 0; k < out.monomials.size(); ++k) {
    const auto& e = out.monomials[k].exponents;
    const auto kk = static_cast<Eigen::Index>(k);
    std::vector<Eigen::Index> axes;
    for (std::size_t d = 0; d < n; ++d) {
      for (int p = 0; p < e[d]; ++p) {
        axes.push_back(static_cast<Eigen::Index>(d));
      }
    }
    if (axes.empty()) {
      out.coefficients[kk] = -0.5 * mu.dot(a_mu);
    } else if (axes.size() == 1) {
      out.coefficients[kk] = a_mu[axes[0]];
    } else if (axes[0] == axes[1]) {
      out.coefficients[kk] = -0.5 * A(axes[0], axes[0]);
    } else {
      out.coefficients[kk] = -A(axes[0], axes[1]);
    }
  }
  const Vector sd = g.covariance().diagonal().cwiseSqrt();
  out.region = BoxDomain(mu - 8.0 * sd, mu + 8.0 * sd);
  return out;
}

/// Scalar function of the state (density or log-density).
using ScalarField = std::function<double(const Vector&)>;

/// Galerkin coefficients H_p(j) = <psi, L_j> of a density (1 x eta).
inline Eigen::RowVectorXd pdf_observable_row(const ScalarField& pdf, const BasisSet& basis, const Quadrature& quad) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
  for (Eigen::Index k = 0; k < quad.nodes().cols(); ++k) {
    const Vector x = quad.nodes().col(k);
    row.noalias() += quad.weights()[k] * pdf(x) * basis.values(x).transpose();
  }
  return row;
}

/// Scalar flow-map output with leak diagnostics.
struct DensityValue {
  double value = 0.0;
  double imaginary_leak = 0.0;
  bool outside_domain = false;
};

/// Density dt after the prior from its Galerkin row: H_p V^{-1} exp(-dt Lambda) V L(x),
/// i.e. the reconstructed prior composed with the inverse map. Raw, may be negative.
inline DensityValue propagate_pdf_observable(const KoopmanModel& model, const Eigen::RowVectorXd& hp, double dt,
                                             const Vector& x) {
  const FlowResult r = forward_flow(model, Matrix(hp), x, -dt);
  return {r.value[0], r.imaginary_leak, r.outside_domain};
}

/// prior(W_{dt}(x)): the prior evaluated at the KO-inverted state.
inline DensityValue propagate_pdf_inverse(const KoopmanModel& model, const ScalarField& prior, double dt,
                                          const Vector& x) {
  const FlowResult back = inverse_flow(model, x, dt);
  return {prior(back.value), back.imaginary_leak, back.outside_domain};
}

/// zeta(W_{dt}(x)), modulo the additive constant of zeta.
inline DensityValue propagate_logpdf_inverse(const KoopmanModel& model, const ScalarField& zeta, double dt,
                                             const Vector& x) {
  return propagate_pdf_inverse(model, zeta, dt, x);
}

/// Batch variant: values of field(W_{dt}(x)) at every column of points.
inline Vector propagate_inverse_batch(const KoopmanModel& model, const ScalarField& field, double dt,
                                      const Matrix& points, BatchFlowResult* diagnostics = nullptr) {
  BatchFlowResult back = inverse_flow_batch(model, points, dt);
  Vector out(points.cols());
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    out[c] = field(back.values.col(c));
  }
  if (diagnostics != nullptr) {
    *diagnostics = std::move(back);
  }
  return out;
}

/// Per-axis sample points of a tensor grid.
using GridAxes = std::vector<std::vector<double>>;

inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  detail::require(count >= 2, "linspace: need at least two points");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return out;
}

/// Density samples on a tensor grid, row-major (last axis fastest).
struct GridEvaluation {
  GridAxes axes;
  Vector values;
  bool normalized = false;

  [[nodiscard]] std::size_t dimension() const { return axes.size(); }
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

namespace detail {

inline void check_axes(const GridAxes& axes) {
  require(!axes.empty(), "grid: need at least one axis");
  for (const auto& axis : axes) {
    require(axis.size() >= 2, "grid: each axis needs at least two points");
    for (std::size_t i = 1; i < axis.size(); ++i) {
      require(axis[i] > axis[i - 1], "grid: axes must be strictly increasing");
    }
  }
}

inline std::vector<double> trapezoid_weights(const std::vector<double>& axis) {
  std::vector<double> w(axis.size(), 0.0);
  for (std::size_t i = 0; i + 1 < axis.size(); ++i) {
    const double h = 0.5 * (axis[i + 1] - axis[i]);
    w[i] += h;
    w[i + 1] += h;
  }
  return w;
}

}  // namespace detail

/// All grid points as columns, in the row-major order of GridEvaluation.
inline Matrix grid_points(const GridAxes& axes) {
  detail::check_axes(axes);
  const std::size_t n = axes.size();
  std::size_t total = 1;
  for (const auto& a : axes) {
    total *= a.size();
  }
  Matrix pts(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(total));
  std::vector<std::size_t> digit(n, 0);
  for (std::size_t k = 0; k < total; ++k) {
    for (std::size_t d = 0; d < n; ++d) {
      pts(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) = axes[d][digit[d]];
    }
    for (std::size_t d = n; d-- > 0;) {
      if (++digit[d] < axes[d].size()) {
        break;
      }
      digit[d] = 0;
    }
  }
  return pts;
}

/// Tensor trapezoidal quadrature weights matching grid_points order.
inline Vector grid_weights(const GridAxes& axes) {
  detail::check_axes(axes);
  Vector w = Vector::Ones(1);
  for (const auto& axis : axes) {
    const auto wa = detail::trapezoid_weights(axis);
    Vector next(w.size() * static_cast<Eigen::Index>(wa.size()));
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      for (std::size_t j = 0; j < wa.size(); ++j) {
        next[i * static_cast<Eigen::Index>(wa.size()) + static_cast<Eigen::Index>(j)] = w[i] * wa[j];
      }
    }
    w = std::move(next);
  }
  return w;
}

inline double grid_integral(const GridAxes& axes, const Vector& values) {
  const Vector w = grid_weights(axes);
  detail::require(w.size() == values.size(), "grid_integral: value count does not match the grid");
  return w.dot(values);
}

enum class FieldKind { density, log_density };

/// Builds a GridEvaluation from precomputed values at grid_points(axes).
/// Log-densities are exponentiated after subtracting their maximum.
inline GridEvaluation grid_from_values(const GridAxes& axes, Vector values, FieldKind kind, bool normalize) {
  detail::check_axes(axes);
  std::vector<Eigen::Index> bad;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      bad.push_back(k);
    }
  }
  if (!bad.empty()) {
    const Matrix pts = grid_points(axes);
    std::ostringstream msg;
    msg << "evaluate_on_grid: " << bad.size() << " non-finite value(s) at";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 10); ++i) {
      msg << " (";
      for (Eigen::Index d = 0; d < pts.rows(); ++d) {
        msg << (d ? "," : "") << pts(d, bad[i]);
      }
      msg << ")";
    }
    if (bad.size() > 10) {
      msg << " ...";
    }
    throw NumericError(msg.str());
  }
  if (kind == FieldKind::log_density) {
    const double peak = values.maxCoeff();
    values = (values.array() - peak).exp().matrix();
  }
  GridEvaluation out{axes, std::move(values), false};
  if (normalize) {
    const double mass = grid_integral(out.axes, out.values);
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      throw NumericError("evaluate_on_grid: cannot normalize a grid with non-positive mass");
    }
    out.values /= mass;
    out.normalized = true;
  }
  return out;
}

inline GridEvaluation evaluate_on_grid(const ScalarField& f, const GridAxes& axes, bool normalize,
                                       FieldKind kind = FieldKind::density) {
  const Matrix pts = grid_points(axes);
  Vector values(pts.cols());
  for (Eigen::Index k = 0; k < pts.cols(); ++k) {
    values[k] = f(pts.col(k));
  }
  return grid_from_values(axes, std::move(values), kind, normalize);
}

}  // namespace kostpm
