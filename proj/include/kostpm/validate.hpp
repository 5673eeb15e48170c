#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kostpm/dynamics.hpp"
#include "kostpm/error.hpp"
#include "kostpm/koopman.hpp"
#include "kostpm/parallel.hpp"
#include "kostpm/updf.hpp"

namespace kostpm {

/// Monte Carlo ensemble advanced to `time`.
struct McEnsemble {
  Matrix samples;  // n x N
  double time = 0.0;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(samples.cols()); }
};

/// Draws `count` prior samples (per-sample seeded streams) and integrates each
/// from t0 to tf with the reference integrator.
inline McEnsemble mc_propagate(const GaussianPdf& prior, const SystemModel& sys, double tf, std::size_t count,
                               std::uint64_t seed, double tol = 1e-10, double t0 = 0.0,
                               std::size_t workers = worker_count()) {
  detail::require(count > 0, "mc_propagate: sample count must be positive");
  detail::require(prior.dimension() == sys.dimension, "mc_propagate: prior/system dimension mismatch");
  const auto n = static_cast<Eigen::Index>(sys.dimension);
  const Matrix chol = prior.cholesky();
  McEnsemble ens;
  ens.samples.resize(n, static_cast<Eigen::Index>(count));
  ens.time = tf;
  ens.seed = seed;
  std::vector<char> failed(count, 0);
  parallel_for(count, [&](std::size_t m) {
    auto engine = sample_engine(seed, m);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector z(n);
    for (Eigen::Index d = 0; d < n; ++d) {
      z[d] = normal(engine);
    }
    const Vector x0 = prior.mean() + chol * z;
    try {
      ens.samples.col(static_cast<Eigen::Index>(m)) = integrate(sys, x0, t0, tf, tol);
    } catch (const IntegrationError&) {
      failed[m] = 1;
    }
  }, workers);
  std::vector<std::size_t> bad;
  for (std::size_t m = 0; m < count; ++m) {
    if (failed[m]) {
      bad.push_back(m);
    }
  }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "mc_propagate: integration failed for " << bad.size() << " sample(s):";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 20); ++i) {
      msg << ' ' << bad[i];
    }
    throw IntegrationError(msg.str());
  }
  return ens;
}

/// Silverman's rule per dimension: h_d = s_d (4 / ((n + 2) N))^{1/(n+4)}.
inline Vector silverman_bandwidth(const McEnsemble& ens) {
  detail::require(ens.size() > 1, "silverman_bandwidth: need at least two samples");
  const auto n = ens.samples.rows();
  const double N = static_cast<double>(ens.size());
  const Vector mean = ens.samples.rowwise().mean();
  const Vector sd = ((ens.samples.colwise() - mean).array().square().rowwise().sum() / (N - 1.0)).sqrt();
  const double factor = std::pow(4.0 / ((static_cast<double>(n) + 2.0) * N), 1.0 / (static_cast<double>(n) + 4.0));
  return sd * factor;
}

/// Gaussian product-kernel density estimate on a tensor grid, normalized by
/// trapezoidal mass. Kernels are truncated at 8 bandwidths.
inline GridEvaluation density_estimate(const McEnsemble& ens, const GridAxes& axes, const Vector& bandwidth) {
  if (ens.size() == 0) {
    throw InvalidArgument("density_estimate: ensemble is empty");
  }
  detail::check_axes(axes);
  const std::size_t n = axes.size();
  detail::require(static_cast<std::size_t>(ens.samples.rows()) == n, "density_estimate: grid/ensemble dimension mismatch");
  detail::require(static_cast<std::size_t>(bandwidth.size()) == n && (bandwidth.array() > 0.0).all(),
                  "density_estimate: bandwidth must be positive per dimension");
  std::vector<std::size_t> stride(n, 1);
  for (std::size_t d = n - 1; d-- > 0;) {
    stride[d] = stride[d + 1] * axes[d + 1].size();
  }
  const std::size_t total = stride[0] * axes[0].size();
  Vector values = Vector::Zero(static_cast<Eigen::Index>(total));

  std::vector<std::size_t> first(n);
  std::vector<std::vector<double>> kernel(n);
  for (Eigen::Index s = 0; s < ens.samples.cols(); ++s) {
    bool empty = false;
    for (std::size_t d = 0; d < n; ++d) {
      const auto dd = static_cast<Eigen::Index>(d);
      const double c = ens.samples(dd, s);
      const double h = bandwidth[dd];
      const auto& axis = axes[d];
      const auto lo = std::lower_bound(axis.begin(), axis.end(), c - 8.0 * h);
      const auto hi = std::upper_bound(axis.begin(), axis.end(), c + 8.0 * h);
      first[d] = static_cast<std::size_t>(lo - axis.begin());
      kernel[d].clear();
      for (auto it = lo; it != hi; ++it) {
        const double u = (*it - c) / h;
        kernel[d].push_back(std::exp(-0.5 * u * u) / (std::sqrt(2.0 * std::numbers::pi) * h));
      }
      empty = empty || kernel[d].empty();
    }
    if (empty) {
      continue;
    }
    std::vector<std::size_t> j(n, 0);
    while (true) {
      double w = 1.0;
      std::size_t offset = 0;
      for (std::size_t d = 0; d < n; ++d) {
        w *= kernel[d][j[d]];
        offset += (first[d] + j[d]) * stride[d];
      }
      values[static_cast<Eigen::Index>(offset)] += w;
      std::size_t d = n;
      while (d-- > 0) {
        if (++j[d] < kernel[d].size()) {
          break;
        }
        j[d] = 0;
      }
      if (d == static_cast<std::size_t>(-1)) {
        break;
      }
    }
  }
  values /= static_cast<double>(ens.size());
  return grid_from_values(axes, std::move(values), FieldKind::density, true);
}

namespace detail {

inline void check_comparable(const GridEvaluation& a, const GridEvaluation& b) {
  if (a.axes != b.axes) {
    throw InvalidArgument("grid comparison: axes differ");
  }
  if (!a.normalized || !b.normalized) {
    throw InvalidArgument("grid comparison: both grids must be normalized");
  }
}

}  // namespace detail

/// sqrt(int (a-b)^2) / sqrt(int b^2), trapezoidal over the shared grid.
inline double grid_l2(const GridEvaluation& a, const GridEvaluation& b) {
  detail::check_comparable(a, b);
  const Vector w = grid_weights(a.axes);
  const Vector diff = a.values - b.values;
  const double den = w.dot(b.values.cwiseProduct(b.values));
  return std::sqrt(w.dot(diff.cwiseProduct(diff)) / den);
}

/// max |a - b| / max b
inline double grid_max_pointwise(const GridEvaluation& a, const GridEvaluation& b) {
  detail::check_comparable(a, b);
  return (a.values - b.values).cwiseAbs().maxCoeff() / b.values.cwiseAbs().maxCoeff();
}

/// Euclidean error between the KO forward flow and the reference integrator
/// at each time (times ascending from t = 0).
inline std::vector<double> state_error_series(const KoopmanModel& model, const SystemModel& sys, const Vector& x0,
                                              const std::vector<double>& times, double tol = 1e-12) {
  std::vector<double> out;
  out.reserve(times.size());
  Vector reference = x0;
  double t_ref = 0.0;
  for (double t : times) {
    reference = integrate(sys, reference, t_ref, t, tol);
    t_ref = t;
    out.push_back((forward_flow(model, x0, t).value - reference).norm());
  }
  return out;
}

/// Minimum-cost perfect matching (Hungarian algorithm) on a square cost
/// matrix; returns assignment[row] = column.
inline std::vector<std::size_t> optimal_assignment(const Matrix& cost) {
  detail::require(cost.rows() == cost.cols(), "optimal_assignment: cost matrix must be square");
  const auto n = static_cast<std::size_t>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0);
  std::vector<std::size_t> way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) {
          continue;
        }
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] != 0) {
      assignment[p[j] - 1] = j - 1;
    }
  }
  return assignment;
}

struct EigenvalueComparison {
  double total_distance = 0.0;  // sum of |a_i - b_pi(i)| under the optimal pairing
  double max_distance = 0.0;
  double max_real_first = 0.0;   // max |Re| of the first set
  double max_real_second = 0.0;  // max |Re| of the second set
  std::vector<std::size_t> pairing;
};

inline EigenvalueComparison eigenvalue_report(const ComplexVector& first, const ComplexVector& second) {
  detail::require(first.size() == second.size(), "eigenvalue_report: eigenvalue sets must have the same size");
  const auto n = first.size();
  Matrix cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      cost(i, j) = std::abs(first[i] - second[j]);
    }
  }
  EigenvalueComparison out;
  out.pairing = optimal_assignment(cost);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = cost(i, static_cast<Eigen::Index>(out.pairing[static_cast<std::size_t>(i)]));
    out.total_distance += d;
    out.max_distance = std::max(out.max_distance, d);
    out.max_real_first = std::max(out.max_real_first, std::abs(first[i].real()));
    out.max_real_second = std::max(out.max_real_second, std::abs(second[i].real()));
  }
  return out;
}

}  // namespace kostpm
