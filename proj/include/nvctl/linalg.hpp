#pragma once

#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "errors.hpp"

namespace nvctl {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

inline Matrix kron(const Matrix& a, const Matrix& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

inline Matrix identity(Eigen::Index n) { return Matrix::Identity(n, n); }

// Spin-1/2 operators in the basis (|up>, |down>).
namespace spin_half {

inline Matrix x() {
  Matrix m(2, 2);
  m << 0.0, 0.5, 0.5, 0.0;
  return m;
}

inline Matrix y() {
  Matrix m(2, 2);
  m << 0.0, -0.5 * kI, 0.5 * kI, 0.0;
  return m;
}

inline Matrix z() {
  Matrix m(2, 2);
  m << 0.5, 0.0, 0.0, -0.5;
  return m;
}

// exp(-i angle I_axis) for a unit axis given by its cartesian components.
inline Matrix rotation(double angle, double nx, double ny, double nz) {
  const double c = std::cos(angle / 2.0);
  const double s = std::sin(angle / 2.0);
  Matrix m(2, 2);
  m << cplx(c, -s * nz), cplx(-s * ny, -s * nx),
       cplx(s * ny, -s * nx), cplx(c, s * nz);
  return m;
}

}  // namespace spin_half

// Spin-1 operators in the basis (|+1>, |0>, |-1>).
namespace spin_one {

inline Matrix z() {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 0) = 1.0;
  m(2, 2) = -1.0;
  return m;
}

inline Matrix x() {
  const double r = 1.0 / std::sqrt(2.0);
  Matrix m = Matrix::Zero(3, 3);
  m(0, 1) = m(1, 0) = m(1, 2) = m(2, 1) = r;
  return m;
}

}  // namespace spin_one

inline double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double hermiticity_defect(const Matrix& m) {
  return (m - m.adjoint()).norm();
}

inline double unitarity_defect(const Matrix& u) {
  return operator_norm(u.adjoint() * u - identity(u.rows()));
}

// exp(-i 2 pi H t) for Hermitian H given in frequency units (MHz) and t in us.
inline Matrix hermitian_propagator(const Matrix& h, double t) {
  if (h.rows() != h.cols()) throw DimensionMismatch("propagator of a non-square matrix");
  if (t == 0.0) return identity(h.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  const auto& v = es.eigenvectors();
  Vector phases(h.rows());
  for (Eigen::Index k = 0; k < h.rows(); ++k)
    phases(k) = std::exp(-kI * (kTwoPi * es.eigenvalues()(k) * t));
  return v * phases.asDiagonal() * v.adjoint();
}

}  // namespace nvctl
