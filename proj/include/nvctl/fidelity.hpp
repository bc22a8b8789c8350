#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "propagation.hpp"
#include "spin_model.hpp"

namespace nvctl {

struct UnitaryGoal {
  Matrix unitary;
};

struct StateGoal {
  DensityState initial;
  DensityState target;
};

struct Target {
  std::string name;
  std::variant<UnitaryGoal, StateGoal> goal;

  bool is_unitary() const { return std::holds_alternative<UnitaryGoal>(goal); }
};

// Strict compares full unitaries. Relaxed additionally maximizes over one relative
// phase between the two electron manifolds.
enum class GateMode { strict, relaxed };

inline double gate_fidelity(const Matrix& u, const Matrix& target, GateMode mode = GateMode::strict) {
  if (u.rows() != 4 || u.cols() != 4 || target.rows() != 4 || target.cols() != 4)
    throw DimensionMismatch("gate fidelity is defined for 4-dim unitaries");
  const Matrix m = target.adjoint() * u;
  if (mode == GateMode::strict) return std::min(1.0, std::abs(m.trace()) / 4.0);
  // Tr(U_T^dag Z(a) U) = A + e^{ia} B with Z(a) = diag(1, 1, e^{ia}, e^{ia}) on the electron
  const cplx a = (target.adjoint().leftCols(2) * u.topRows(2)).trace();
  const cplx b = (target.adjoint().rightCols(2) * u.bottomRows(2)).trace();
  return std::min(1.0, (std::abs(a) + std::abs(b)) / 4.0);
}

// Tr(rho_T rho) / sqrt(Tr(rho_T^2) Tr(rho^2)).
inline double state_fidelity(const DensityState& rho, const DensityState& target) {
  if (rho.dim() != target.dim()) throw DimensionMismatch("state dimensions differ");
  const double pr = rho.purity(), pt = target.purity();
  if (pr < 1e-12 || pt < 1e-12) throw ZeroPurity("state with vanishing purity");
  const double f = (target.matrix * rho.matrix).trace().real() / std::sqrt(pr * pt);
  return std::clamp(f, 0.0, 1.0);
}

// --- reference states and gates -------------------------------------------------

// rho_0 = |0><0| (x) E/2
inline DensityState initial_state() {
  return DensityState(subspace_ops::p0() / 2.0);
}

inline Vector basis_vector(int i, int n = 4) {
  Vector v = Vector::Zero(n);
  v(i) = 1.0;
  return v;
}

// |s_0> = (|up> + i|down>)/sqrt2 and |s_-> = (|phi_-> - |psi_->)/sqrt2.
inline std::pair<Vector, Vector> coherence_superpositions(const SystemParams& p) {
  const auto [phi, psi] = nuclear_eigenstates(quantization_angle(p, Branch::minus));
  Vector s0(2);
  s0 << 1.0, kI;
  return {s0 / std::sqrt(2.0), (phi - psi) / std::sqrt(2.0)};
}

inline Vector embed(int electron, const Vector& carbon) {
  Vector v = Vector::Zero(4);
  v.segment(2 * electron, 2) = carbon;
  return v;
}

// rho_c = (|0><0| (x) |s_0><s_0| + |-1><-1| (x) |s_-><s_-|)/2
inline DensityState coherence_state(const SystemParams& p) {
  const auto [s0, sm] = coherence_superpositions(p);
  const Vector a = embed(0, s0), b = embed(1, sm);
  return DensityState((a * a.adjoint() + b * b.adjoint()) / 2.0);
}

// rho_p = (|0><0| + |-1><-1|)/2 (x) |up><up|
inline DensityState polarized_state() {
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = m(2, 2) = 0.5;
  return DensityState(m);
}

// A unitary that maps rho_0 onto rho_c exactly, completed on the orthogonal complement.
inline Matrix ideal_coherence_unitary(const SystemParams& p) {
  const auto [s0, sm] = coherence_superpositions(p);
  Vector s0_perp(2);
  s0_perp << 1.0, -kI;
  s0_perp /= std::sqrt(2.0);
  const auto [phi, psi] = nuclear_eigenstates(quantization_angle(p, Branch::minus));
  const Vector sm_perp = (phi + psi) / std::sqrt(2.0);
  Matrix u(4, 4);
  u.col(0) = embed(0, s0);
  u.col(1) = embed(1, sm);
  u.col(2) = embed(0, s0_perp);
  u.col(3) = embed(1, sm_perp);
  return u;
}

// U_90 = E (x) exp(-i (pi/2) I_x)
inline Matrix u90_gate() {
  return kron(identity(2), spin_half::rotation(kPi / 2.0, 1, 0, 0));
}

// U_H = i exp(-i(pi/2)I_z) U_90 exp(-i(pi/2)I_z)
inline Matrix hadamard_gate() {
  const Matrix rz = kron(identity(2), spin_half::rotation(kPi / 2.0, 0, 0, 1));
  return kI * rz * u90_gate() * rz;
}

// Two 90 deg pulses with phases 0 and -90 deg, separated by 1/(2|A_zz|), on the
// m_S = 0 <-> +1 transition. Moves |0,down> to |+1,down>.
inline PulseSequence ut_sequence(const SystemParams& p, double rabi_mhz) {
  if (!(rabi_mhz > 0.0)) throw InvalidParams("U_t needs a positive Rabi frequency");
  if (p.a_zz == 0.0) throw InvalidParams("U_t needs a nonzero A_zz");
  PulseSequence s;
  s.rabi_mhz = rabi_mhz;
  s.pulse(1.0 / (4.0 * rabi_mhz), 0.0).delay(1.0 / (2.0 * std::abs(p.a_zz))).pulse(1.0 / (4.0 * rabi_mhz), 1.5 * kPi);
  return s;
}

inline Matrix ut_reference(const SystemParams& p, double rabi_mhz) {
  return sequence_propagator(build_hamiltonian_subspace(p, Branch::plus), ut_sequence(p, rabi_mhz));
}

inline const std::vector<std::string>& target_names() {
  static const std::vector<std::string> names{"u_c", "u_c_dagger", "u_p", "u_90", "u_t"};
  return names;
}

inline Target build_target(const std::string& name, const SystemParams& p, double rabi_mhz = 0.5) {
  if (name == "u_c") return {name, StateGoal{initial_state(), coherence_state(p)}};
  if (name == "u_c_dagger") return {name, StateGoal{coherence_state(p), initial_state()}};
  if (name == "u_p") return {name, StateGoal{initial_state(), polarized_state()}};
  if (name == "u_90") return {name, UnitaryGoal{u90_gate()}};
  if (name == "u_t") return {name, UnitaryGoal{ut_reference(p, rabi_mhz)}};
  throw UnknownTarget("unknown target '" + name + "'");
}

inline Target custom_target(const Matrix& u) {
  if (u.rows() != 4 || unitarity_defect(u) > 1e-10) throw InvalidParams("custom target must be a 4-dim unitary");
  return {"custom", UnitaryGoal{u}};
}

inline Target custom_target(const DensityState& from, const DensityState& to) {
  from.validate();
  to.validate();
  if (from.dim() != 4 || to.dim() != 4) throw DimensionMismatch("custom states must be 4-dim");
  return {"custom", StateGoal{from, to}};
}

// Gate or state fidelity of the propagator u with respect to the target.
inline double fidelity(const Matrix& u, const Target& t, GateMode mode = GateMode::strict) {
  if (const auto* g = std::get_if<UnitaryGoal>(&t.goal)) return gate_fidelity(u, g->unitary, mode);
  const auto& s = std::get<StateGoal>(t.goal);
  return state_fidelity(evolve(s.initial, u), s.target);
}

struct RobustnessRange {
  double omega_lo = 0.47;
  double omega_hi = 0.53;
  std::size_t n_samples = 5;

  void validate() const {
    if (!(omega_lo <= omega_hi)) throw InvalidParams("robustness range must have lo <= hi");
    if (n_samples < 1) throw InvalidParams("robustness range needs at least one sample");
  }

  // Equally spaced amplitudes including both endpoints; one sample sits at the midpoint.
  std::vector<double> samples() const {
    validate();
    return linspace(omega_lo, omega_hi, n_samples);
  }
};

// Per-amplitude fidelities, in sample order.
inline std::vector<double> sample_fidelities(const PulseSequence& seq, const Target& target,
                                             const RobustnessRange& range, const Hamiltonian& h,
                                             GateMode mode = GateMode::strict) {
  seq.validate();
  const auto rabis = range.samples();
  std::vector<double> out;
  out.reserve(rabis.size());
  for (double r : rabis) {
    PulseSequence scaled = seq;
    scaled.rabi_mhz = r;
    out.push_back(fidelity(sequence_propagator(h, scaled), target, mode));
  }
  return out;
}

inline double robust_fidelity(const PulseSequence& seq, const Target& target,
                              const RobustnessRange& range, const Hamiltonian& h,
                              GateMode mode = GateMode::strict) {
  const auto f = sample_fidelities(seq, target, range, h, mode);
  double sum = 0.0;
  for (double v : f) sum += v;
  return sum / static_cast<double>(f.size());
}

}  // namespace nvctl
