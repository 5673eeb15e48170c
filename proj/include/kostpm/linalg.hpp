#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kostpm/basis.hpp"
#include "kostpm/error.hpp"

namespace kostpm {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

/// V K = diag(values) V with unit-norm rows in V; inverse_left = V^{-1}.
struct Eigendecomposition {
  ComplexVector values;
  ComplexMatrix left;
  ComplexMatrix left_inverse;
  double residual = 0.0;   // ||V K - Lambda V||_F
  double condition = 1.0;  // 2-norm condition number of V
};

inline constexpr double kMaxEigenvectorCondition = 1e12;
inline constexpr double kEigenResidualTolerance = 1e-8;
inline constexpr double kPinvCutoff = 1e-12;

/// Left eigendecomposition of a real square matrix. Conjugate pairs are
/// adjacent (positive imaginary part first); ordering is by |Im|, then Re.
inline Eigendecomposition eigendecompose(const Matrix& K) {
  detail::require(K.rows() == K.cols() && K.rows() > 0, "eigendecompose: matrix must be square and non-empty");
  detail::require(K.allFinite(), "eigendecompose: matrix has non-finite entries");
  Eigen::EigenSolver<Matrix> solver(K, true);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigendecompose: eigen-solver did not converge");
  }
  const ComplexVector raw_values = solver.eigenvalues();
  const ComplexMatrix raw_right = solver.eigenvectors();
  const auto n = K.rows();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const Complex la = raw_values[a];
    const Complex lb = raw_values[b];
    if (std::abs(la.imag()) != std::abs(lb.imag())) {
      return std::abs(la.imag()) < std::abs(lb.imag());
    }
    if (la.real() != lb.real()) {
      return la.real() < lb.real();
    }
    return la.imag() > lb.imag();
  });

  Eigendecomposition out;
  out.values.resize(n);
  ComplexMatrix right(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values[k] = raw_values[order[static_cast<std::size_t>(k)]];
    right.col(k) = raw_right.col(order[static_cast<std::size_t>(k)]);
  }

  Eigen::JacobiSVD<ComplexMatrix> svd(right);
  const auto& sv = svd.singularValues();
  const double right_condition = sv[n - 1] > 0.0 ? sv[0] / sv[n - 1] : INFINITY;
  if (!(right_condition < kMaxEigenvectorCondition)) {
    std::ostringstream msg;
    msg << "eigendecompose: eigenvector matrix is numerically singular (condition " << right_condition
        << "); the matrix appears defective";
    throw NumericError(msg.str());
  }

  // Rows of R^{-1} are left eigenvectors; rescale each to unit norm.
  ComplexMatrix left = right.partialPivLu().inverse();
  out.left_inverse = right;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double norm = left.row(k).norm();
    left.row(k) /= norm;
    out.left_inverse.col(k) *= norm;
  }
  out.left = std::move(left);

  const ComplexMatrix Kc = K.cast<Complex>();
  out.residual = (out.left * Kc - out.values.asDiagonal() * out.left).norm();
  const double scale = std::max(K.norm(), 1e-300);
  if (out.residual > kEigenResidualTolerance * scale && out.residual > 1e-14) {
    std::ostringstream msg;
    msg << "eigendecompose: residual ||VK - LV||_F = " << out.residual << " exceeds " << kEigenResidualTolerance
        << " * ||K||_F; the matrix appears defective";
    throw NumericError(msg.str());
  }
  Eigen::JacobiSVD<ComplexMatrix> left_svd(out.left);
  const auto& lsv = left_svd.singularValues();
  out.condition = lsv[n - 1] > 0.0 ? lsv[0] / lsv[n - 1] : INFINITY;
  return out;
}

/// Truncated pseudo-inverse with singular values below cutoff * sigma_max dropped.
struct PseudoInverse {
  Matrix matrix;
  Eigen::Index rank = 0;
  double condition = 1.0;  // sigma_max / sigma_min over all singular values
};

inline PseudoInverse pseudo_inverse(const Matrix& A, double cutoff = kPinvCutoff) {
  Eigen::BDCSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  PseudoInverse out;
  if (s.size() == 0 || s[0] <= 0.0 || !std::isfinite(s[0])) {
    throw NumericError("pseudo_inverse: matrix is zero or not finite");
  }
  const double threshold = cutoff * s[0];
  Vector inv_s = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > threshold) {
      inv_s[i] = 1.0 / s[i];
      ++out.rank;
    }
  }
  out.condition = s[s.size() - 1] > 0.0 ? s[0] / s[s.size() - 1] : INFINITY;
  out.matrix = svd.matrixV() * inv_s.asDiagonal() * svd.matrixU().transpose();
  return out;
}

/// Principal logarithm of a diagonalizable real matrix via its
/// eigendecomposition. Fails if an eigenvalue sits on the closed negative real
/// axis (including zero).
inline Matrix matrix_log(const Matrix& A) {
  const Eigendecomposition eig = eigendecompose(A);
  ComplexVector log_values(eig.values.size());
  for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
    const Complex lambda = eig.values[k];
    const double mag = std::abs(lambda);
    if (mag == 0.0 || (lambda.real() <= 0.0 && std::abs(lambda.imag()) <= 1e-12 * std::max(mag, 1.0))) {
      std::ostringstream msg;
      msg << "matrix_log: eigenvalue " << lambda.real() << (lambda.imag() < 0 ? "" : "+") << lambda.imag()
          << "i lies on the branch cut (closed negative real axis)";
      throw NumericError(msg.str());
    }
    log_values[k] = std::log(lambda);
  }
  const ComplexMatrix log_a = eig.left_inverse * log_values.asDiagonal() * eig.left;
  return log_a.real();
}

}  // namespace kostpm
