#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kostpm/basis.hpp"
#include "kostpm/dynamics.hpp"
#include "kostpm/error.hpp"
#include "kostpm/linalg.hpp"

namespace kostpm {

/// Continuous-time Galerkin generator: K(i,j) = <grad L_i . f, L_j>, so that
/// dL/dt ~= K L. Row 0 (the constant function) is zero.
inline Matrix galerkin_koopman(const SystemModel& sys, const BasisSet& basis, const Quadrature& quad) {
  detail::require(sys.dimension == basis.dimension(), "galerkin_koopman: system/basis dimension mismatch");
  const auto eta = static_cast<Eigen::Index>(basis.size());
  Matrix K = Matrix::Zero(eta, eta);
  for (Eigen::Index k = 0; k < quad.nodes().cols(); ++k) {
    const Vector x = quad.nodes().col(k);
    const BasisEvaluation e = basis.evaluate(x, true);
    const Vector f = sys(0.0, x);
    const Vector lie = e.gradient * f;
    K.noalias() += quad.weights()[k] * lie * e.values.transpose();
  }
  return K;
}

/// Discrete-time EDMD matrix with least-squares diagnostics.
struct EdmdResult {
  Matrix matrix;
  Eigen::Index effective_rank = 0;
  double gram_condition = 1.0;
  bool rank_deficient = false;
};

namespace detail {

inline Matrix lift(const BasisSet& basis, const Matrix& states) { return basis.values_at(states); }

}  // namespace detail

/// K~ = A G^+ with G = (1/M) sum L(x)L(x)^T and A = (1/M) sum L(y)L(x)^T,
/// the minimizer of ||L(Y) - K~ L(X)||_F.
inline EdmdResult edmd_koopman(const SnapshotSet& snap, const BasisSet& basis) {
  detail::require(static_cast<std::size_t>(snap.X.rows()) == basis.dimension(),
                  "edmd_koopman: snapshot/basis dimension mismatch");
  detail::require(snap.size() >= basis.size(), "edmd_koopman: need at least as many snapshots as basis functions");
  const Matrix LX = detail::lift(basis, snap.X);
  const Matrix LY = detail::lift(basis, snap.Y);
  if (!LX.allFinite() || !LY.allFinite()) {
    throw NumericError("edmd_koopman: non-finite snapshot values");
  }
  const double inv_m = 1.0 / static_cast<double>(snap.size());
  const Matrix G = inv_m * LX * LX.transpose();
  const Matrix A = inv_m * LY * LX.transpose();
  const PseudoInverse pinv = pseudo_inverse(G);
  EdmdResult out;
  out.matrix = A * pinv.matrix;
  out.effective_rank = pinv.rank;
  out.gram_condition = pinv.condition;
  out.rank_deficient = pinv.rank < G.rows();
  return out;
}

/// K = log(K~) / dt (principal branch, through the eigendecomposition).
inline Matrix discrete_to_continuous(const Matrix& discrete, double dt) {
  detail::require(dt != 0.0, "discrete_to_continuous: dt must be non-zero");
  return matrix_log(discrete) / dt;
}

/// Observable function: state -> gamma-vector.
using Observable = std::function<Vector(const Vector&)>;

inline Observable identity_observable() {
  return [](const Vector& x) { return x; };
}

/// H(i,j) = <g_i, L_j> by quadrature.
inline Matrix observable_matrix_galerkin(const Observable& g, std::size_t gamma, const BasisSet& basis,
                                         const Quadrature& quad) {
  Matrix H = Matrix::Zero(static_cast<Eigen::Index>(gamma), static_cast<Eigen::Index>(basis.size()));
  for (Eigen::Index k = 0; k < quad.nodes().cols(); ++k) {
    const Vector x = quad.nodes().col(k);
    const Vector gx = g(x);
    detail::require(static_cast<std::size_t>(gx.size()) == gamma,
                    "observable_matrix_galerkin: observable size does not match gamma");
    H.noalias() += quad.weights()[k] * gx * basis.values(x).transpose();
  }
  return H;
}

/// Least-squares fit H~ of g over the snapshot states: g(X) ~= H~ L(X).
inline Matrix observable_matrix_edmd(const SnapshotSet& snap, const Matrix& g_values, const BasisSet& basis) {
  detail::require(g_values.cols() == snap.X.cols(), "observable_matrix_edmd: need one g column per snapshot");
  const Matrix LX = detail::lift(basis, snap.X);
  const PseudoInverse pinv = pseudo_inverse(LX * LX.transpose());
  return g_values * LX.transpose() * pinv.matrix;
}

struct Provenance {
  enum class Kind { galerkin, edmd };
  Kind kind = Kind::galerkin;
  std::size_t snapshots = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;

  [[nodiscard]] std::string name() const { return kind == Kind::galerkin ? "galerkin" : "edmd"; }
};

/// Continuous generator K with its left eigendecomposition and observable
/// matrix. Immutable after construction.
class KoopmanModel {
 public:
  KoopmanModel(BasisSet basis, Matrix generator, Matrix observables, Provenance provenance = {})
      : basis_(std::move(basis)),
        generator_(std::move(generator)),
        observables_(std::move(observables)),
        provenance_(provenance),
        eig_(eigendecompose(generator_)) {
    detail::require(generator_.rows() == static_cast<Eigen::Index>(basis_.size()),
                    "KoopmanModel: generator size does not match the basis");
    detail::require(observables_.cols() == generator_.rows(), "KoopmanModel: H must have eta columns");
    observables_left_inverse_ = observables_.cast<Complex>() * eig_.left_inverse;
  }

  [[nodiscard]] const BasisSet& basis() const { return basis_; }
  [[nodiscard]] const Matrix& generator() const { return generator_; }
  [[nodiscard]] const Matrix& observables() const { return observables_; }
  [[nodiscard]] const Provenance& provenance() const { return provenance_; }
  [[nodiscard]] const Eigendecomposition& eigen() const { return eig_; }
  [[nodiscard]] const ComplexVector& eigenvalues() const { return eig_.values; }

  /// H V^{-1} for the model's own observables (cached).
  [[nodiscard]] const ComplexMatrix& observables_left_inverse() const { return observables_left_inverse_; }

 private:
  BasisSet basis_;
  Matrix generator_;
  Matrix observables_;
  Provenance provenance_;
  Eigendecomposition eig_;
  ComplexMatrix observables_left_inverse_;
};

/// Galerkin model of `sys` with the identity observable.
inline KoopmanModel build_galerkin_model(const SystemModel& sys, const BasisSet& basis) {
  const Quadrature quad = Quadrature::for_basis(basis);
  Matrix K = galerkin_koopman(sys, basis, quad);
  Matrix H = observable_matrix_galerkin(identity_observable(), sys.dimension, basis, quad);
  return {basis, std::move(K), std::move(H), Provenance{}};
}

/// EDMD model from snapshots with the identity observable fitted on X.
inline KoopmanModel build_edmd_model(const SnapshotSet& snap, const BasisSet& basis) {
  const EdmdResult edmd = edmd_koopman(snap, basis);
  Matrix K = discrete_to_continuous(edmd.matrix, snap.dt);
  Matrix H = observable_matrix_edmd(snap, snap.X, basis);
  Provenance prov{Provenance::Kind::edmd, snap.size(), snap.dt, snap.seed};
  return {basis, std::move(K), std::move(H), prov};
}

/// Result of one flow-map evaluation: real part of the observable prediction.
struct FlowResult {
  Vector value;
  double imaginary_leak = 0.0;  // ||Im|| / max(||Re||, tiny)
  bool outside_domain = false;

  [[nodiscard]] bool leak_warning() const { return imaginary_leak > 1e-8; }
};

namespace detail {

inline FlowResult apply_flow(const ComplexMatrix& hv_inv, const KoopmanModel& model, const Vector& x, double dt) {
  const BasisEvaluation e = model.basis().evaluate(x);
  ComplexVector phi = model.eigen().left * e.values.cast<Complex>();
  const ComplexVector& lambda = model.eigenvalues();
  for (Eigen::Index k = 0; k < phi.size(); ++k) {
    phi[k] *= std::exp(lambda[k] * dt);
  }
  const ComplexVector y = hv_inv * phi;
  FlowResult out;
  out.value = y.real();
  out.imaginary_leak = y.imag().norm() / std::max(out.value.norm(), 1e-300);
  out.outside_domain = e.outside_domain;
  return out;
}

inline Matrix apply_flow_batch(const ComplexMatrix& hv_inv, const KoopmanModel& model, const Matrix& points,
                               double dt, double* max_leak, std::size_t* outside) {
  const Matrix lifted = model.basis().values_at(points);
  ComplexMatrix phi = model.eigen().left * lifted.cast<Complex>();
  const ComplexVector& lambda = model.eigenvalues();
  for (Eigen::Index k = 0; k < phi.rows(); ++k) {
    phi.row(k) *= std::exp(lambda[k] * dt);
  }
  const ComplexMatrix y = hv_inv * phi;
  if (max_leak != nullptr) {
    double leak = 0.0;
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      leak = std::max(leak, y.col(c).imag().norm() / std::max(y.col(c).real().norm(), 1e-300));
    }
    *max_leak = leak;
  }
  if (outside != nullptr) {
    std::size_t count = 0;
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
      count += model.basis().domain().contains(points.col(c)) ? 0 : 1;
    }
    *outside = count;
  }
  return y.real();
}

}  // namespace detail

/// H V^{-1} exp(dt Lambda) V L(x0).
inline FlowResult forward_flow(const KoopmanModel& model, const Vector& x0, double dt) {
  return detail::apply_flow(model.observables_left_inverse(), model, x0, dt);
}

/// H V^{-1} exp(-dt Lambda) V L(xf): the state dt earlier.
inline FlowResult inverse_flow(const KoopmanModel& model, const Vector& xf, double dt) {
  return forward_flow(model, xf, -dt);
}

/// Same map with an arbitrary observable matrix (e.g. a density row H_p).
inline FlowResult forward_flow(const KoopmanModel& model, const Matrix& observables, const Vector& x0, double dt) {
  detail::require(observables.cols() == static_cast<Eigen::Index>(model.basis().size()),
                  "forward_flow: observable matrix needs eta columns");
  const ComplexMatrix hv_inv = observables.cast<Complex>() * model.eigen().left_inverse;
  return detail::apply_flow(hv_inv, model, x0, dt);
}

/// Diagnostics for a batch of flow evaluations.
struct BatchFlowResult {
  Matrix values;  // gamma x N
  double max_imaginary_leak = 0.0;
  std::size_t outside_domain = 0;
};

inline BatchFlowResult forward_flow_batch(const KoopmanModel& model, const Matrix& points, double dt) {
  BatchFlowResult out;
  out.values = detail::apply_flow_batch(model.observables_left_inverse(), model, points, dt,
                                        &out.max_imaginary_leak, &out.outside_domain);
  return out;
}

inline BatchFlowResult inverse_flow_batch(const KoopmanModel& model, const Matrix& points, double dt) {
  return forward_flow_batch(model, points, -dt);
}

/// A model bound to a signed duration; FlowMap(dt) then FlowMap(-dt) ~ identity.
class FlowMap {
 public:
  FlowMap(const KoopmanModel& model, double dt) : model_(&model), dt_(dt) {}

  [[nodiscard]] double duration() const { return dt_; }
  [[nodiscard]] FlowMap inverse() const { return {*model_, -dt_}; }
  [[nodiscard]] Vector operator()(const Vector& x) const { return forward_flow(*model_, x, dt_).value; }
  [[nodiscard]] Matrix operator()(const Matrix& points) const {
    return forward_flow_batch(*model_, points, dt_).values;
  }

 private:
  const KoopmanModel* model_;
  double dt_;
};

}  // namespace kostpm
