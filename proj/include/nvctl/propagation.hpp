#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "spin_model.hpp"

namespace nvctl {

// Free precession for `us` microseconds.
struct Delay {
  double us = 0.0;
  bool operator==(const Delay&) const = default;
};

// Rectangular resonant MW pulse of length `us` and phase `phase_rad`.
struct Pulse {
  double us = 0.0;
  double phase_rad = 0.0;
  bool operator==(const Pulse&) const = default;
};

using Segment = std::variant<Delay, Pulse>;

inline double wrap_phase(double phi) {
  double w = std::fmod(phi, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

inline double segment_duration(const Segment& s) {
  return std::visit([](const auto& x) { return x.us; }, s);
}

// Alternating delays and constant-amplitude pulses at Rabi frequency rabi_mhz (= omega_1 / 2pi).
struct PulseSequence {
  double rabi_mhz = 0.5;
  std::vector<Segment> segments;

  PulseSequence& delay(double us) {
    segments.emplace_back(Delay{us});
    return *this;
  }
  PulseSequence& pulse(double us, double phase_rad) {
    segments.emplace_back(Pulse{us, wrap_phase(phase_rad)});
    return *this;
  }

  double total_duration() const {
    double t = 0.0;
    for (const auto& s : segments) t += segment_duration(s);
    return t;
  }

  std::size_t pulse_count() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += std::holds_alternative<Pulse>(s);
    return n;
  }

  void validate() const {
    if (!(rabi_mhz >= 0.0) || !std::isfinite(rabi_mhz))
      throw InvalidParams("Rabi frequency must be finite and non-negative");
    for (const auto& s : segments) {
      const double d = segment_duration(s);
      if (!(d >= 0.0) || !std::isfinite(d)) throw InvalidParams("segment durations must be >= 0");
      if (const auto* p = std::get_if<Pulse>(&s))
        if (!(p->phase_rad >= 0.0 && p->phase_rad < kTwoPi))
          throw InvalidParams("pulse phases must lie in [0, 2pi)");
    }
  }

  bool operator==(const PulseSequence&) const = default;
};

enum class Subsystem { electron, carbon };

struct BlochVector {
  double x = 0.0, y = 0.0, z = 0.0;
  Subsystem subsystem = Subsystem::carbon;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// Trace-one positive semidefinite density operator.
struct DensityState {
  Matrix matrix;

  DensityState() = default;
  explicit DensityState(Matrix m) : matrix(std::move(m)) {}

  Eigen::Index dim() const { return matrix.rows(); }
  double trace() const { return matrix.trace().real(); }
  double purity() const { return (matrix * matrix).trace().real(); }

  static DensityState pure(const Vector& psi) {
    const Vector n = psi.normalized();
    return DensityState(n * n.adjoint());
  }

  void validate(double tol = 1e-10) const {
    if (matrix.rows() != matrix.cols() || matrix.rows() == 0)
      throw DimensionMismatch("density matrix must be square and non-empty");
    if (std::abs(matrix.trace() - cplx(1.0)) > tol) throw InvalidParams("density matrix trace != 1");
    if (hermiticity_defect(matrix) > tol) throw InvalidParams("density matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> es(matrix, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol) throw InvalidParams("density matrix is not PSD");
  }
};

inline Matrix free_propagator(const Hamiltonian& h, double tau_us) {
  if (!(tau_us >= 0.0)) throw InvalidParams("delay must be non-negative");
  return hermitian_propagator(h.matrix, tau_us);
}

// Drive term omega_1 [s_x cos(phi) + s_y sin(phi)] on the electron pseudo-spin.
inline Matrix drive_operator(double rabi_mhz, double phi) {
  return rabi_mhz * (std::cos(phi) * subspace_ops::sx() + std::sin(phi) * subspace_ops::sy());
}

inline Matrix pulse_propagator(const Hamiltonian& h, double rabi_mhz, double phi, double t_us) {
  if (h.dim() != 4) throw DimensionMismatch("pulses act on the 4-dim working subspace");
  if (!(t_us >= 0.0)) throw InvalidParams("pulse length must be non-negative");
  return hermitian_propagator(h.matrix + drive_operator(rabi_mhz, phi), t_us);
}

inline Matrix segment_propagator(const Hamiltonian& h, double rabi_mhz, const Segment& s) {
  if (const auto* p = std::get_if<Pulse>(&s)) return pulse_propagator(h, rabi_mhz, p->phase_rad, p->us);
  return free_propagator(h, std::get<Delay>(s).us);
}

// Time-ordered product: the first segment acts first (rightmost factor).
inline Matrix sequence_propagator(const Hamiltonian& h, const PulseSequence& seq) {
  seq.validate();
  Matrix u = identity(h.dim());
  for (const auto& s : seq.segments) u = segment_propagator(h, seq.rabi_mhz, s) * u;
  return u;
}

inline DensityState evolve(const DensityState& rho, const Matrix& u) {
  if (u.rows() != rho.dim() || u.cols() != rho.dim())
    throw DimensionMismatch("propagator and state dimensions differ");
  return DensityState(u * rho.matrix * u.adjoint());
}

// Reduced 2x2 state of one factor of the 4-dim space (electron pseudo-spin x carbon).
inline Matrix reduced_state(const DensityState& rho, Subsystem which) {
  if (rho.dim() != 4) throw DimensionMismatch("Bloch vectors are defined on the 4-dim subspace");
  Matrix r = Matrix::Zero(2, 2);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int k = 0; k < 2; ++k)
        r(a, b) += which == Subsystem::carbon ? rho.matrix(2 * k + a, 2 * k + b)
                                              : rho.matrix(2 * a + k, 2 * b + k);
  return r;
}

// x = 2 Re r01, y = 2 Im r10, z = r00 - r11. For the electron, index 0 is |0>.
inline BlochVector bloch_vector(const DensityState& rho, Subsystem which) {
  const Matrix r = reduced_state(rho, which);
  return {2.0 * r(0, 1).real(), 2.0 * r(1, 0).imag(), (r(0, 0) - r(1, 1)).real(), which};
}

struct TrajectoryPoint {
  double t_us;
  BlochVector electron;
  BlochVector carbon;
};

// Samples every dt inside each segment plus every segment boundary.
inline std::vector<TrajectoryPoint> trajectory(const Hamiltonian& h, const PulseSequence& seq,
                                               const DensityState& rho0, double dt_us = 0.01) {
  if (!(dt_us > 0.0)) throw InvalidParams("trajectory step must be positive");
  seq.validate();
  std::vector<TrajectoryPoint> out;
  auto record = [&](double t, const DensityState& r) {
    out.push_back({t, bloch_vector(r, Subsystem::electron), bloch_vector(r, Subsystem::carbon)});
  };
  DensityState rho = rho0;
  double t0 = 0.0;
  record(t0, rho);
  for (const auto& s : seq.segments) {
    const double d = segment_duration(s);
    if (d == 0.0) continue;
    auto partial = [&](double dur) -> Segment {
      if (const auto* p = std::get_if<Pulse>(&s)) return Pulse{dur, p->phase_rad};
      return Delay{dur};
    };
    for (int k = 1; k * dt_us < d - 1e-12; ++k)
      record(t0 + k * dt_us, evolve(rho, segment_propagator(h, seq.rabi_mhz, partial(k * dt_us))));
    rho = evolve(rho, segment_propagator(h, seq.rabi_mhz, s));
    t0 += d;
    record(t0, rho);
  }
  return out;
}

// Cached propagator builder for repeated evaluation of sequences on one 4-dim
// Hamiltonian at a fixed set of Rabi frequencies. When H commutes with s_z, a
// pulse of phase phi equals Z(phi) U(0) Z(phi)^dag with Z = exp(-i phi s_z), so a
// single eigendecomposition per Rabi frequency serves every phase.
// Immutable after construction; safe to share between threads.
class SequenceEvaluator {
 public:
  using M4 = Eigen::Matrix4cd;

  SequenceEvaluator(const Hamiltonian& h, std::span<const double> rabis)
      : h_(h), rabis_(rabis.begin(), rabis.end()) {
    if (h.dim() != 4) throw DimensionMismatch("SequenceEvaluator needs the 4-dim subspace");
    const Matrix comm = h.matrix * subspace_ops::sz() - subspace_ops::sz() * h.matrix;
    commutes_ = comm.norm() <= 1e-13 * (1.0 + h.matrix.norm());
    free_ = decompose(h.matrix);
    for (double r : rabis_) pulses_.push_back(decompose(h.matrix + drive_operator(r, 0.0)));
  }

  std::size_t rabi_count() const { return rabis_.size(); }
  double rabi(std::size_t i) const { return rabis_.at(i); }
  const Hamiltonian& hamiltonian() const { return h_; }

  M4 free(double tau) const { return expm(free_, tau); }

  M4 pulse(std::size_t rabi_index, double phi, double t) const {
    if (!commutes_) return pulse_propagator(h_, rabis_.at(rabi_index), phi, t);
    M4 u = expm(pulses_.at(rabi_index), t);
    const cplx zl = std::polar(1.0, -phi / 2.0);
    const std::array<cplx, 4> z{zl, zl, std::conj(zl), std::conj(zl)};
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) u(j, k) *= z[j] * std::conj(z[k]);
    return u;
  }

  // Propagator of seq with its Rabi frequency replaced by rabis_[rabi_index].
  M4 propagator(const PulseSequence& seq, std::size_t rabi_index) const {
    M4 u = M4::Identity();
    for (const auto& s : seq.segments) {
      if (segment_duration(s) == 0.0) continue;
      if (const auto* p = std::get_if<Pulse>(&s))
        u = pulse(rabi_index, p->phase_rad, p->us) * u;
      else
        u = free(std::get<Delay>(s).us) * u;
    }
    return u;
  }

 private:
  struct Decomposition {
    M4 vecs;
    Eigen::Vector4d vals;
  };

  static Decomposition decompose(const Matrix& m) {
    const M4 mm = m;
    Eigen::SelfAdjointEigenSolver<M4> es(mm);
    return {es.eigenvectors(), es.eigenvalues()};
  }

  static M4 expm(const Decomposition& d, double t) {
    Eigen::Vector4cd ph;
    for (int k = 0; k < 4; ++k) ph(k) = std::polar(1.0, -kTwoPi * d.vals(k) * t);
    return d.vecs * ph.asDiagonal() * d.vecs.adjoint();
  }

  Hamiltonian h_;
  std::vector<double> rabis_;
  bool commutes_ = false;
  Decomposition free_;
  std::vector<Decomposition> pulses_;
};

}  // namespace nvctl
