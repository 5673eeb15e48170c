#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kostpm/error.hpp"

namespace kostpm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Axis-aligned box in state space. The Galerkin weight is the uniform
/// density on this box.
class BoxDomain {
 public:
  BoxDomain() = default;
  BoxDomain(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    detail::require(lower_.size() == upper_.size() && lower_.size() > 0,
                    "BoxDomain: lower and upper must have the same positive dimension");
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
      detail::require(std::isfinite(lower_[i]) && std::isfinite(upper_[i]) && lower_[i] < upper_[i],
                      "BoxDomain: require finite lower[i] < upper[i]");
    }
  }

  static BoxDomain cube(std::size_t dimension, double lower, double upper) {
    const auto n = static_cast<Eigen::Index>(dimension);
    return {Vector::Constant(n, lower), Vector::Constant(n, upper)};
  }

  [[nodiscard]] std::size_t dimension() const { return static_cast<std::size_t>(lower_.size()); }
  [[nodiscard]] const Vector& lower() const { return lower_; }
  [[nodiscard]] const Vector& upper() const { return upper_; }
  [[nodiscard]] Vector center() const { return 0.5 * (lower_ + upper_); }
  [[nodiscard]] Vector half_width() const { return 0.5 * (upper_ - lower_); }
  [[nodiscard]] double volume() const { return (upper_ - lower_).prod(); }

  [[nodiscard]] bool contains(const Eigen::Ref<const Vector>& x, double slack = 0.0) const {
    return ((x.array() >= lower_.array() - slack) && (x.array() <= upper_.array() + slack)).all();
  }

  /// Affine map onto the reference cube [-1,1]^n.
  [[nodiscard]] Vector to_reference(const Eigen::Ref<const Vector>& x) const {
    return ((2.0 * x - lower_ - upper_).array() / (upper_ - lower_).array()).matrix();
  }

  [[nodiscard]] Vector from_reference(const Eigen::Ref<const Vector>& u) const {
    return center() + (half_width().array() * u.array()).matrix();
  }

  /// d(reference)/d(state) per axis.
  [[nodiscard]] Vector reference_scale() const { return (2.0 / (upper_ - lower_).array()).matrix(); }

  friend bool operator==(const BoxDomain& a, const BoxDomain& b) {
    return a.lower_ == b.lower_ && a.upper_ == b.upper_;
  }

 private:
  Vector lower_;
  Vector upper_;
};

struct MultiIndex {
  std::vector<int> exponents;

  [[nodiscard]] int degree() const { return std::accumulate(exponents.begin(), exponents.end(), 0); }
  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
};

namespace detail {

inline void append_compositions(std::size_t dim, int remaining, std::vector<int>& prefix,
                                std::vector<MultiIndex>& out) {
  if (prefix.size() + 1 == dim) {
    prefix.push_back(remaining);
    out.push_back({prefix});
    prefix.pop_back();
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    prefix.push_back(e);
    append_compositions(dim, remaining - e, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace detail

/// All multi-indices of total degree <= order in graded lexicographic order:
/// by degree, then by decreasing leading exponent. Index 0 is the zero index.
inline std::vector<MultiIndex> enumerate_indices(std::size_t dimension, int order) {
  detail::require(dimension >= 1, "enumerate_indices: dimension must be >= 1");
  detail::require(order >= 0, "enumerate_indices: order must be >= 0");
  std::vector<MultiIndex> out;
  std::vector<int> prefix;
  prefix.reserve(dimension);
  for (int d = 0; d <= order; ++d) {
    detail::append_compositions(dimension, d, prefix, out);
  }
  return out;
}

/// Position of an exponent vector inside an enumerate_indices list, or -1.
inline std::ptrdiff_t index_of(const std::vector<MultiIndex>& indices, const std::vector<int>& exponents) {
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k].exponents == exponents) {
      return static_cast<std::ptrdiff_t>(k);
    }
  }
  return -1;
}

/// Normalized Legendre values sqrt(2k+1) P_k(u), k = 0..order, and optionally
/// their u-derivatives. Orthonormal under the weight 1/2 on [-1,1].
inline void normalized_legendre(int order, double u, double* values, double* derivatives = nullptr) {
  values[0] = 1.0;
  if (derivatives != nullptr) {
    derivatives[0] = 0.0;
  }
  if (order >= 1) {
    values[1] = u;
    if (derivatives != nullptr) {
      derivatives[1] = 1.0;
    }
  }
  for (int k = 1; k < order; ++k) {
    values[k + 1] = ((2.0 * k + 1.0) * u * values[k] - k * values[k - 1]) / (k + 1.0);
    if (derivatives != nullptr) {
      derivatives[k + 1] = derivatives[k - 1] + (2.0 * k + 1.0) * values[k];
    }
  }
  for (int k = 0; k <= order; ++k) {
    const double norm = std::sqrt(2.0 * k + 1.0);
    values[k] *= norm;
    if (derivatives != nullptr) {
      derivatives[k] *= norm;
    }
  }
}

/// Basis values at one point; gradient is eta x n with respect to the state
/// coordinates (chain rule of the box map included) when requested.
struct BasisEvaluation {
  Vector values;
  Matrix gradient;
  bool outside_domain = false;
};

/// Total-degree truncated tensor-product normalized Legendre basis on a box.
class BasisSet {
 public:
  BasisSet(BoxDomain domain, int order)
      : domain_(std::move(domain)), order_(order), indices_(enumerate_indices(domain_.dimension(), order)) {}

  [[nodiscard]] const BoxDomain& domain() const { return domain_; }
  [[nodiscard]] int order() const { return order_; }
  [[nodiscard]] std::size_t dimension() const { return domain_.dimension(); }
  [[nodiscard]] std::size_t size() const { return indices_.size(); }
  [[nodiscard]] const std::vector<MultiIndex>& indices() const { return indices_; }

  [[nodiscard]] BasisEvaluation evaluate(const Eigen::Ref<const Vector>& x, bool with_gradient = false) const {
    const std::size_t n = dimension();
    detail::require(static_cast<std::size_t>(x.size()) == n, "BasisSet::evaluate: dimension mismatch");
    const auto stride = static_cast<std::size_t>(order_ + 1);
    std::vector<double> table(n * stride);
    std::vector<double> dtable(with_gradient ? n * stride : 0);
    const Vector u = domain_.to_reference(x);
    for (std::size_t d = 0; d < n; ++d) {
      normalized_legendre(order_, u[static_cast<Eigen::Index>(d)], &table[d * stride],
                          with_gradient ? &dtable[d * stride] : nullptr);
    }

    BasisEvaluation out;
    out.outside_domain = !domain_.contains(x);
    const auto eta = static_cast<Eigen::Index>(size());
    out.values.resize(eta);
    if (with_gradient) {
      out.gradient.resize(eta, static_cast<Eigen::Index>(n));
    }
    const Vector scale = domain_.reference_scale();
    for (Eigen::Index i = 0; i < eta; ++i) {
      const auto& e = indices_[static_cast<std::size_t>(i)].exponents;
      double product = 1.0;
      for (std::size_t d = 0; d < n; ++d) {
        product *= table[d * stride + static_cast<std::size_t>(e[d])];
      }
      out.values[i] = product;
      if (!with_gradient) {
        continue;
      }
      for (std::size_t j = 0; j < n; ++j) {
        double partial = dtable[j * stride + static_cast<std::size_t>(e[j])] * scale[static_cast<Eigen::Index>(j)];
        for (std::size_t d = 0; d < n; ++d) {
          if (d != j) {
            partial *= table[d * stride + static_cast<std::size_t>(e[d])];
          }
        }
        out.gradient(i, static_cast<Eigen::Index>(j)) = partial;
      }
    }
    return out;
  }

  [[nodiscard]] Vector values(const Eigen::Ref<const Vector>& x) const { return evaluate(x).values; }

  /// Basis values for a batch of points (columns); returns eta x N.
  [[nodiscard]] Matrix values_at(const Matrix& points) const {
    Matrix out(static_cast<Eigen::Index>(size()), points.cols());
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
      out.col(c) = evaluate(points.col(c)).values;
    }
    return out;
  }

 private:
  BoxDomain domain_;
  int order_;
  std::vector<MultiIndex> indices_;
};

/// Gauss-Legendre nodes and weights on [-1,1] (weights sum to 2).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int points) {
  detail::require(points >= 1, "gauss_legendre: need at least one point");
  if (points == 1) {
    return {{0.0}, {2.0}};
  }
  std::vector<double> nodes(static_cast<std::size_t>(points));
  std::vector<double> weights(static_cast<std::size_t>(points));
  for (int i = 0; i < (points + 1) / 2; ++i) {
    // Newton iteration from the Chebyshev-like initial guess.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (points + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= points; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = points * (x * p1 - p0) / (x * x - 1.0);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) < 1e-16) {
        break;
      }
    }
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(points - 1 - i);
    nodes[lo] = -x;
    nodes[hi] = x;
    weights[lo] = weights[hi] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return {nodes, weights};
}

/// Tensor Gauss-Legendre rule on a box, weights normalized to the uniform
/// probability density (they sum to 1).
class Quadrature {
 public:
  Quadrature(const BoxDomain& domain, int points_per_dimension) : domain_(domain) {
    const auto [ref_nodes, ref_weights] = gauss_legendre(points_per_dimension);
    const std::size_t n = domain.dimension();
    const auto q = static_cast<std::size_t>(points_per_dimension);
    std::size_t total = 1;
    for (std::size_t d = 0; d < n; ++d) {
      total *= q;
    }
    nodes_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(total));
    weights_.resize(static_cast<Eigen::Index>(total));
    std::vector<std::size_t> digit(n, 0);
    for (std::size_t k = 0; k < total; ++k) {
      double w = 1.0;
      Vector u(static_cast<Eigen::Index>(n));
      for (std::size_t d = 0; d < n; ++d) {
        u[static_cast<Eigen::Index>(d)] = ref_nodes[digit[d]];
        w *= 0.5 * ref_weights[digit[d]];
      }
      nodes_.col(static_cast<Eigen::Index>(k)) = domain.from_reference(u);
      weights_[static_cast<Eigen::Index>(k)] = w;
      for (std::size_t d = n; d-- > 0;) {
        if (++digit[d] < q) {
          break;
        }
        digit[d] = 0;
      }
    }
  }

  /// Default size for a basis of the given order: 2*order + 2 points per axis.
  static Quadrature for_basis(const BasisSet& basis) { return {basis.domain(), 2 * basis.order() + 2}; }

  [[nodiscard]] const BoxDomain& domain() const { return domain_; }
  [[nodiscard]] const Matrix& nodes() const { return nodes_; }
  [[nodiscard]] const Vector& weights() const { return weights_; }
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(weights_.size()); }

 private:
  BoxDomain domain_;
  Matrix nodes_;  // n x Q
  Vector weights_;
};

/// <f, g> = sum_k w_k f(x_k) g(x_k) under the uniform weight of the rule's box.
template <typename F, typename G>
double inner_product(F&& f, G&& g, const Quadrature& quad) {
  double sum = 0.0;
  for (Eigen::Index k = 0; k < quad.nodes().cols(); ++k) {
    const Vector x = quad.nodes().col(k);
    sum += quad.weights()[k] * f(x) * g(x);
  }
  return sum;
}

}  // namespace kostpm
