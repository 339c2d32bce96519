#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

namespace stdg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Accumulates y += alpha * (time ⊗ space) x for one space-time block.
///
/// Space-time coefficient vectors are stored time-major: entry (a, s) lives at
/// a * n_space + s, with a the time-basis index and s the spatial index.
inline void kron_apply(const Matrix &time, const Matrix &space, const double *x, double *y,
                       double alpha = 1.0) {
  const auto nt_out = time.rows();
  const auto nt_in = time.cols();
  const auto ns_out = space.rows();
  const auto ns_in = space.cols();
  if (nt_out == 1 && nt_in == 1) {
    Eigen::Map<const Vector> xv(x, ns_in);
    Eigen::Map<Vector> yv(y, ns_out);
    yv.noalias() += (alpha * time(0, 0)) * (space * xv);
    return;
  }
  Eigen::Map<const RowMatrix> X(x, nt_in, ns_in);
  Eigen::Map<RowMatrix> Y(y, nt_out, ns_out);
  Y.noalias() += alpha * (time * (X * space.transpose()));
}

/// Materialises the dense Kronecker product time ⊗ space in time-major ordering.
inline Matrix kron(const Matrix &time, const Matrix &space) {
  Matrix out(time.rows() * space.rows(), time.cols() * space.cols());
  for (Eigen::Index a = 0; a < time.rows(); ++a)
    for (Eigen::Index b = 0; b < time.cols(); ++b)
      out.block(a * space.rows(), b * space.cols(), space.rows(), space.cols()) =
          time(a, b) * space;
  return out;
}

/// Inverse of a symmetric positive definite matrix through a Cholesky
/// factorisation of its Jacobi-scaled form, which keeps round-off low for the
/// badly scaled monomial mass matrices. The result is exactly symmetric.
inline Matrix spd_inverse(const Matrix &m) {
  const Vector s = m.diagonal().cwiseSqrt().cwiseInverse();
  const Matrix scaled = s.asDiagonal() * m * s.asDiagonal();
  Matrix inv = scaled.llt().solve(Matrix::Identity(m.rows(), m.cols()));
  inv = s.asDiagonal() * inv * s.asDiagonal();
  return 0.5 * (inv + inv.transpose());
}

/// ‖a − b‖_F / max(‖b‖_F, floor).
inline double relative_difference(const Matrix &a, const Matrix &b, double floor = 1e-300) {
  const double denom = std::max(b.norm(), floor);
  return (a - b).norm() / denom;
}

/// Ratio of extreme eigenvalue magnitudes of a symmetric matrix.
inline double symmetric_condition(const Matrix &m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const auto &ev = es.eigenvalues();
  const double lo = ev.cwiseAbs().minCoeff();
  const double hi = ev.cwiseAbs().maxCoeff();
  if (lo <= 0.0)
    return std::numeric_limits<double>::infinity();
  return hi / lo;
}

} // namespace stdg
