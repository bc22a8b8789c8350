#pragma once

#include <random>

#include <nvctl/nvctl.hpp>

namespace nvtest {

using nvctl::Matrix;
using nvctl::SystemParams;

// |A| <= 1 MHz, nu_C <= 1 MHz, with a small floor on A_zx so the axis is defined.
inline SystemParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> a(-1.0, 1.0), nc(0.01, 1.0);
  SystemParams p;
  p.a_zz = a(rng);
  p.a_zx = a(rng);
  if (std::abs(p.a_zx) < 1e-3) p.a_zx = 1e-3;
  p.nu_c_override = nc(rng);
  return p;
}

inline nvctl::PulseSequence random_sequence(std::mt19937_64& rng, std::size_t n_pulses, double rabi = 0.5) {
  std::uniform_real_distribution<double> t(0.0, 3.0), ph(0.0, nvctl::kTwoPi);
  nvctl::PulseSequence s;
  s.rabi_mhz = rabi;
  for (std::size_t k = 0; k < n_pulses; ++k) s.delay(t(rng)).pulse(t(rng), ph(rng));
  return s;
}

inline Matrix random_unitary(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = {g(rng), g(rng)};
  Eigen::HouseholderQR<Matrix> qr(m);
  return qr.householderQ();
}

// Eigenvalues of a Hermitian matrix, ascending.
inline Eigen::VectorXd eigenvalues(const Matrix& h) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(h, Eigen::EigenvaluesOnly).eigenvalues();
}

// exp(-i 2pi H t) from a Taylor series with scaling and squaring; independent of
// any eigendecomposition.
inline Matrix taylor_propagator(const Matrix& h, double t) {
  const Matrix a = std::complex<double>(0.0, -nvctl::kTwoPi * t) * h;
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  while (norm / std::pow(2.0, squarings) > 0.25) ++squarings;
  const Matrix b = a / std::pow(2.0, squarings);
  Matrix term = Matrix::Identity(h.rows(), h.cols()), sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * b / static_cast<double>(k);
    sum += term;
  }
  for (int k = 0; k < squarings; ++k) sum = sum * sum;
  return sum;
}

// Symmetric Trotter product exp(-iA dt/2) exp(-iB dt) exp(-iA dt/2) over 2^k slices;
// converges to the exact propagator as k grows.
inline Matrix trotter_propagator(const Matrix& h0, const Matrix& h1, double t, int k) {
  const double dt = t / std::pow(2.0, k);
  const Matrix half = taylor_propagator(h0, dt / 2.0);
  Matrix u = half * taylor_propagator(h1, dt) * half;
  for (int i = 0; i < k; ++i) u = u * u;
  return u;
}

}  // namespace nvtest
