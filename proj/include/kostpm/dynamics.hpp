#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "kostpm/basis.hpp"
#include "kostpm/error.hpp"
#include "kostpm/parallel.hpp"

namespace kostpm {

/// Autonomous or time-dependent right-hand side dx/dt = f(t, x).
struct SystemModel {
  using Rhs = std::function<void(double t, std::span<const double> x, std::span<double> dxdt)>;

  std::string name;
  std::size_t dimension = 0;
  Rhs rhs;
  bool hamiltonian = false;
  /// Polynomial degree of f when known (0 if not polynomial / unknown).
  int polynomial_degree = 0;

  [[nodiscard]] Vector operator()(double t, const Eigen::Ref<const Vector>& x) const {
    Vector dx(x.size());
    rhs(t, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
        std::span<double>(dx.data(), static_cast<std::size_t>(dx.size())));
    return dx;
  }
};

struct DuffingParams {
  double mass = 1.0;
  double stiffness = 1.0;
  double unit_scale = 1.0;  // a
  double epsilon = 0.01;

  void validate() const {
    detail::require(mass > 0.0, "DuffingParams: mass must be > 0");
    detail::require(stiffness > 0.0, "DuffingParams: stiffness must be > 0");
    detail::require(epsilon >= 0.0, "DuffingParams: epsilon must be >= 0");
  }
};

/// [x2/m, -k x1 - k a^2 eps x1^3]
inline Eigen::Vector2d duffing_rhs(const Eigen::Vector2d& x, const DuffingParams& p) {
  const double cubic = p.stiffness * p.unit_scale * p.unit_scale * p.epsilon;
  return {x[1] / p.mass, -p.stiffness * x[0] - cubic * x[0] * x[0] * x[0]};
}

inline double duffing_energy(const Eigen::Ref<const Vector>& x, const DuffingParams& p) {
  const double x1 = x[0];
  const double x2 = x[1];
  return x2 * x2 / (2.0 * p.mass) + p.stiffness * x1 * x1 / 2.0 +
         p.stiffness * p.unit_scale * p.unit_scale * p.epsilon * x1 * x1 * x1 * x1 / 4.0;
}

inline SystemModel make_duffing(const DuffingParams& p) {
  p.validate();
  SystemModel sys;
  sys.name = p.epsilon == 0.0 ? "harmonic" : "duffing";
  sys.dimension = 2;
  sys.hamiltonian = true;
  sys.polynomial_degree = p.epsilon == 0.0 ? 1 : 3;
  const double inv_mass = 1.0 / p.mass;
  const double k = p.stiffness;
  const double cubic = p.stiffness * p.unit_scale * p.unit_scale * p.epsilon;
  sys.rhs = [inv_mass, k, cubic](double, std::span<const double> x, std::span<double> dx) {
    const double x1 = x[0];
    dx[0] = x[1] * inv_mass;
    dx[1] = -k * x1 - cubic * x1 * x1 * x1;
  };
  return sys;
}

/// Linear oscillator x1' = x2, x2' = -x1 (the epsilon = 0 Duffing system).
inline SystemModel make_harmonic_oscillator() {
  DuffingParams p;
  p.epsilon = 0.0;
  return make_duffing(p);
}

/// Central-difference trace of the Jacobian of f at (t, x).
inline double jacobian_trace(const SystemModel& sys, const Eigen::Ref<const Vector>& x, double t = 0.0,
                             double step = 1e-6) {
  double trace = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector plus = x;
    Vector minus = x;
    plus[i] += step;
    minus[i] -= step;
    trace += (sys(t, plus)[i] - sys(t, minus)[i]) / (2.0 * step);
  }
  return trace;
}

/// Adaptive Runge-Kutta-Fehlberg 7(8) from t0 to tf (tf < t0 integrates
/// backward). Local error is controlled to tol (absolute and relative).
inline Vector integrate(const SystemModel& sys, const Eigen::Ref<const Vector>& x0, double t0, double tf,
                        double tol = 1e-12) {
  detail::require(static_cast<std::size_t>(x0.size()) == sys.dimension, "integrate: state dimension mismatch");
  detail::require(tol > 0.0, "integrate: tolerance must be positive");
  if (tf == t0) {
    return x0;
  }
  namespace odeint = boost::numeric::odeint;
  using State = std::vector<double>;
  State state(x0.data(), x0.data() + x0.size());
  auto rhs = [&sys](const State& x, State& dxdt, double t) { sys.rhs(t, x, dxdt); };
  auto stepper = odeint::make_controlled(tol, tol, odeint::runge_kutta_fehlberg78<State>());
  const double span = tf - t0;
  const double dt0 = std::copysign(std::min(0.01, std::abs(span)), span);
  try {
    odeint::integrate_adaptive(stepper, rhs, state, t0, tf, dt0);
  } catch (const std::exception& e) {
    throw IntegrationError(std::string("integrate: step-size control failed: ") + e.what());
  }
  Vector out = Eigen::Map<const Vector>(state.data(), static_cast<Eigen::Index>(state.size()));
  if (!out.allFinite()) {
    throw IntegrationError("integrate: non-finite state reached");
  }
  return out;
}

/// Engine for sample `index` of a seeded stream; independent of how samples
/// are distributed over threads.
inline std::mt19937_64 sample_engine(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

/// Paired snapshots: column m of Y is the dt-flow of column m of X.
struct SnapshotSet {
  Matrix X;
  Matrix Y;
  double dt = 0.0;
  std::uint64_t seed = 0;
  BoxDomain domain;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(X.cols()); }
};

/// Uniform i.i.d. states in the box, each advanced by dt with the reference
/// integrator at tol 1e-12. Needs at least `basis_size` pairs.
inline SnapshotSet generate_snapshots(const SystemModel& sys, const BoxDomain& domain, std::size_t count,
                                      double dt, std::uint64_t seed, std::size_t basis_size = 1,
                                      double tol = 1e-12) {
  if (count == 0) {
    throw InvalidArgument("generate_snapshots: snapshot count must be positive");
  }
  if (count < basis_size) {
    throw InvalidArgument("generate_snapshots: " + std::to_string(count) + " snapshots for " +
                          std::to_string(basis_size) +
                          " basis functions leaves the EDMD least-squares problem underdetermined");
  }
  detail::require(domain.dimension() == sys.dimension, "generate_snapshots: domain/system dimension mismatch");
  const auto n = static_cast<Eigen::Index>(sys.dimension);
  SnapshotSet snap;
  snap.X.resize(n, static_cast<Eigen::Index>(count));
  snap.Y.resize(n, static_cast<Eigen::Index>(count));
  snap.dt = dt;
  snap.seed = seed;
  snap.domain = domain;
  parallel_for(count, [&](std::size_t m) {
    auto engine = sample_engine(seed, m);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector x(n);
    for (Eigen::Index d = 0; d < n; ++d) {
      x[d] = domain.lower()[d] + (domain.upper()[d] - domain.lower()[d]) * unit(engine);
    }
    const auto col = static_cast<Eigen::Index>(m);
    snap.X.col(col) = x;
    snap.Y.col(col) = integrate(sys, x, 0.0, dt, tol);
  });
  return snap;
}

}  // namespace kostpm

namespace kostpm {

/// Exact flow matrix of the linear oscillator (epsilon = 0): x(t) = A(t) x(0).
inline Eigen::Matrix2d harmonic_flow_matrix(const DuffingParams& p, double t) {
  const double w = std::sqrt(p.stiffness / p.mass);
  const double c = std::cos(w * t);
  const double s = std::sin(w * t);
  Eigen::Matrix2d A;
  A << c, s / (p.mass * w), -p.mass * w * s, c;
  return A;
}

}  // namespace kostpm
