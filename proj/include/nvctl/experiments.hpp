#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>
#include <unsupported/Eigen/NonLinearOptimization>

#include "errors.hpp"
#include "fidelity.hpp"
#include "linalg.hpp"
#include "propagation.hpp"
#include "spectrum.hpp"
#include "spin_model.hpp"

namespace nvctl {

// Signal samples on a strictly increasing delay grid.
struct FidTrace {
  std::string protocol;
  std::vector<double> tau_us;
  std::vector<double> signal;

  std::size_t size() const { return tau_us.size(); }
};

inline void check_tau_grid(const std::vector<double>& tau) {
  if (tau.empty()) throw BadGrid("empty delay grid");
  for (std::size_t i = 0; i < tau.size(); ++i) {
    if (!(tau[i] >= 0.0) || !std::isfinite(tau[i])) throw BadGrid("delays must be finite and >= 0");
    if (i > 0 && !(tau[i] > tau[i - 1])) throw BadGrid("delay grid must increase strictly");
  }
}

// n samples 0, step, 2 step, ...
inline std::vector<double> uniform_grid(double step_us, std::size_t n) {
  if (!(step_us > 0.0)) throw BadGrid("grid step must be positive");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = step_us * static_cast<double>(i);
  return g;
}

// --- the 6-level electron x 13C space (m_N = +1) ---------------------------------
// Index order follows build_hamiltonian_ec: |+1>, |0>, |-1> each with {up, down}.
namespace six {

// 6-dim indices of the 4-dim working basis |0,up>, |0,down>, |m,up>, |m,down>.
inline std::array<int, 4> working_indices(Branch transition) {
  if (transition == Branch::minus) return {2, 3, 4, 5};
  return {2, 3, 0, 1};
}

// u4 on the chosen transition, identity on the spectator level.
inline Matrix embed(const Matrix& u4, Branch transition = Branch::minus) {
  if (u4.rows() != 4 || u4.cols() != 4) throw DimensionMismatch("embed expects a 4-dim operator");
  const auto idx = working_indices(transition);
  Matrix u = identity(6);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) u(idx[j], idx[k]) = u4(j, k);
  return u;
}

// Like embed, but zero on the spectator level; used for states and observables.
inline Matrix lift(const Matrix& m4, Branch transition = Branch::minus) {
  if (m4.rows() != 4 || m4.cols() != 4) throw DimensionMismatch("lift expects a 4-dim operator");
  const auto idx = working_indices(transition);
  Matrix m = Matrix::Zero(6, 6);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) m(idx[j], idx[k]) = m4(j, k);
  return m;
}

// Ideal 180 deg pulse on m_S = 0 <-> +1: exchanges the two levels, carbon untouched.
inline Matrix swap_plus() {
  Matrix s = Matrix::Zero(6, 6);
  s(0, 2) = s(2, 0) = s(1, 3) = s(3, 1) = 1.0;
  s(4, 4) = s(5, 5) = 1.0;
  return s;
}

inline Matrix ms0_projector() {
  Matrix m = Matrix::Zero(6, 6);
  m(2, 2) = m(3, 3) = 1.0;
  return m;
}

}  // namespace six

// Initial state, preparation, free delay, readout and the measured observable,
// all on the 6-level space. signal(tau) = Tr(O R F(tau) P rho P^dag F^dag R^dag).
struct FidProtocol {
  std::string name;
  Matrix initial;
  Matrix prepare;
  Matrix readout;
  Matrix observable;
};

inline FidTrace run_fid(const FidProtocol& proto, const SystemParams& p, const std::vector<double>& tau) {
  check_tau_grid(tau);
  const Matrix h = build_hamiltonian_ec(p, Frame::rotating).matrix;
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  const Matrix& v = es.eigenvectors();
  const Eigen::VectorXd& e = es.eigenvalues();
  const Matrix rho = v.adjoint() * proto.prepare * proto.initial * proto.prepare.adjoint() * v;
  const Matrix obs = v.adjoint() * proto.readout.adjoint() * proto.observable * proto.readout * v;
  FidTrace out;
  out.protocol = proto.name;
  out.tau_us = tau;
  out.signal.reserve(tau.size());
  for (double t : tau) {
    cplx s = 0.0;
    for (int j = 0; j < 6; ++j)
      for (int k = 0; k < 6; ++k) s += obs(k, j) * rho(j, k) * std::polar(1.0, -kTwoPi * (e(j) - e(k)) * t);
    out.signal.push_back(s.real());
  }
  return out;
}

// --- coherence readout protocols ------------------------------------------------
// The signal is Tr(rho_0 rho_final), half the m_S = 0 population, so that ideal
// preparation reproduces Tr(rho_c rho_tau) in [0, 1/2].

inline FidProtocol uc_protocol(const Matrix& uc, const Matrix& uc_dag) {
  const Matrix r0 = six::lift(initial_state().matrix);
  return {"uc_readout", r0, six::embed(uc), six::embed(uc_dag), r0};
}

inline FidProtocol uc_prime_protocol(const Matrix& uc, const Matrix& uc_dag) {
  const Matrix r0 = six::lift(initial_state().matrix);
  const Matrix s = six::swap_plus();
  return {"uc_prime_readout", r0, s * six::embed(uc), six::embed(uc_dag) * s, r0};
}

inline FidTrace fid_uc_unitary(const SystemParams& p, const Matrix& uc, const Matrix& uc_dag,
                               const std::vector<double>& tau) {
  return run_fid(uc_protocol(uc, uc_dag), p, tau);
}

inline FidTrace fid_uc_prime_unitary(const SystemParams& p, const Matrix& uc, const Matrix& uc_dag,
                                     const std::vector<double>& tau) {
  return run_fid(uc_prime_protocol(uc, uc_dag), p, tau);
}

inline FidTrace fid_uc(const SystemParams& p, const PulseSequence& seq_uc, const PulseSequence& seq_uc_dag,
                       const std::vector<double>& tau) {
  const Hamiltonian h = build_hamiltonian_subspace(p);
  return fid_uc_unitary(p, sequence_propagator(h, seq_uc), sequence_propagator(h, seq_uc_dag), tau);
}

inline FidTrace fid_uc_prime(const SystemParams& p, const PulseSequence& seq_uc,
                             const PulseSequence& seq_uc_dag, const std::vector<double>& tau) {
  const Hamiltonian h = build_hamiltonian_subspace(p);
  return fid_uc_prime_unitary(p, sequence_propagator(h, seq_uc), sequence_propagator(h, seq_uc_dag), tau);
}

enum class FidKind { uc, uc_prime };

// [cos(2pi nu_a tau) + cos(2pi nu_b tau)]/8 + 1/4 with (nu_C, nu_-) or (nu_-, nu_+).
inline FidTrace analytic_fid(FidKind kind, const SystemParams& p, const std::vector<double>& tau) {
  check_tau_grid(tau);
  const auto f = nuclear_frequencies(p);
  const double na = kind == FidKind::uc ? f.nu_c : f.nu_minus;
  const double nb = kind == FidKind::uc ? f.nu_minus : f.nu_plus;
  FidTrace out;
  out.protocol = "analytic";
  out.tau_us = tau;
  for (double t : tau) out.signal.push_back((std::cos(kTwoPi * na * t) + std::cos(kTwoPi * nb * t)) / 8.0 + 0.25);
  return out;
}

// --- pseudo-Hadamard FID ---------------------------------------------------------

enum class ElectronLevel { ms0 = 0, ms_minus = -1, ms_plus = 1 };

// 4-dim building blocks: u90 and flip act on m_S = 0 <-> -1, ut on m_S = 0 <-> +1.
struct U90Readout {
  Matrix u90;
  Matrix flip;
  Matrix ut;

  // Exact U_90, exact 180 deg y pulse, and a U_t that moves |0,down> to |+1,down>.
  static U90Readout ideal() {
    Matrix ut = identity(4);
    ut(1, 1) = ut(3, 3) = 0.0;
    ut(1, 3) = ut(3, 1) = 1.0;
    return {u90_gate(), kron(spin_half::rotation(kPi, 0, 1, 0), identity(2)), ut};
  }

  // Propagators of the given sequences; the flip is a hard-edged 180 deg pulse of
  // phase pi/2 at the U_90 sequence's Rabi frequency.
  static U90Readout from_sequences(const SystemParams& p, const PulseSequence& seq_u90,
                                   const PulseSequence& seq_ut) {
    const Hamiltonian hm = build_hamiltonian_subspace(p, Branch::minus);
    const Hamiltonian hp = build_hamiltonian_subspace(p, Branch::plus);
    if (!(seq_u90.rabi_mhz > 0.0)) throw InvalidParams("U_90 sequence needs a positive Rabi frequency");
    PulseSequence flip;
    flip.rabi_mhz = seq_u90.rabi_mhz;
    flip.pulse(1.0 / (2.0 * seq_u90.rabi_mhz), kPi / 2.0);
    return {sequence_propagator(hm, seq_u90), sequence_propagator(hm, flip), sequence_propagator(hp, seq_ut)};
  }
};

// Electron in |0>, carbon (E + pol sigma_z)/2.
inline Matrix polarized_carbon_initial(double polarization) {
  if (!(std::abs(polarization) <= 1.0)) throw InvalidParams("polarization must lie in [-1, 1]");
  Matrix m = Matrix::Zero(6, 6);
  m(2, 2) = (1.0 + polarization) / 2.0;
  m(3, 3) = (1.0 - polarization) / 2.0;
  return m;
}

// Signal is the m_S = 0 population after U_t.
inline FidProtocol u90_protocol(ElectronLevel level, const U90Readout& ops, double polarization = 1.0) {
  const Matrix ut = six::embed(ops.ut, Branch::plus);
  const Matrix u90 = six::embed(ops.u90);
  const Matrix s = six::swap_plus();
  FidProtocol proto{"", polarized_carbon_initial(polarization), identity(6), identity(6), six::ms0_projector()};
  switch (level) {
    case ElectronLevel::ms0:
      proto.name = "u90_ms0";
      proto.prepare = u90;
      proto.readout = ut * u90;
      break;
    case ElectronLevel::ms_minus: {
      const Matrix flip = six::embed(ops.flip);
      proto.name = "u90_ms-1";
      proto.prepare = flip;
      proto.readout = ut * flip;
      break;
    }
    case ElectronLevel::ms_plus:
      proto.name = "u90_ms+1";
      proto.prepare = s * u90;
      proto.readout = ut * u90 * s;
      break;
  }
  return proto;
}

inline FidTrace fid_u90(const SystemParams& p, ElectronLevel level, const U90Readout& ops,
                        const std::vector<double>& tau, double polarization = 1.0) {
  return run_fid(u90_protocol(level, ops, polarization), p, tau);
}

inline FidTrace fid_u90(const SystemParams& p, ElectronLevel level, const PulseSequence& seq_u90,
                        const PulseSequence& seq_ut, const std::vector<double>& tau, double polarization = 1.0) {
  return fid_u90(p, level, U90Readout::from_sequences(p, seq_u90, seq_ut), tau, polarization);
}

// --- spectra ---------------------------------------------------------------------

struct Window {
  enum class Kind { none, hann, exponential };
  Kind kind = Kind::hann;
  double rate_per_us = 0.0;

  std::string name() const {
    switch (kind) {
      case Kind::none: return "none";
      case Kind::hann: return "hann";
      case Kind::exponential: return "exponential:" + std::to_string(rate_per_us);
    }
    return "none";
  }

  // "none", "hann", "exponential:<rate>" or "exp:<rate>".
  static Window parse(const std::string& s) {
    if (s == "none") return {Kind::none, 0.0};
    if (s == "hann") return {Kind::hann, 0.0};
    for (const std::string prefix : {"exponential:", "exp:"}) {
      if (s.rfind(prefix, 0) == 0) {
        std::size_t used = 0;
        const std::string tail = s.substr(prefix.size());
        double r = 0.0;
        try {
          r = std::stod(tail, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != tail.size() || tail.empty() || !(r >= 0.0)) throw InvalidParams("bad exponential window rate");
        return {Kind::exponential, r};
      }
    }
    throw InvalidParams("unknown window '" + s + "'");
  }

  double weight(std::size_t i, std::size_t n, double t_us) const {
    switch (kind) {
      case Kind::none: return 1.0;
      case Kind::hann:
        return n < 2 ? 1.0 : 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n - 1)));
      case Kind::exponential: return std::exp(-rate_per_us * t_us);
    }
    return 1.0;
  }
};

// Magnitude spectrum, scaled so that a cosine of amplitude a peaks near a.
inline Spectrum spectrum_from_fid(const FidTrace& fid, const Window& window = {}, int zerofill_factor = 4) {
  if (zerofill_factor < 1) throw InvalidParams("zero-fill factor must be >= 1");
  const std::size_t n = fid.size();
  if (n < 2 || fid.signal.size() != n) throw BadGrid("spectrum needs at least two samples");
  check_tau_grid(fid.tau_us);
  const double dt = (fid.tau_us.back() - fid.tau_us.front()) / static_cast<double>(n - 1);
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(fid.tau_us[i] - fid.tau_us[i - 1] - dt) > 1e-9 * std::max(1.0, dt))
      throw NonuniformGrid("spectrum needs a uniform delay grid");

  double mean = 0.0;
  for (double v : fid.signal) mean += v;
  mean /= static_cast<double>(n);

  const std::size_t nz = n * static_cast<std::size_t>(zerofill_factor);
  std::vector<double> x(nz, 0.0);
  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = window.weight(i, n, fid.tau_us[i] - fid.tau_us.front());
    x[i] = w * (fid.signal[i] - mean);
    wsum += w;
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, x);

  Spectrum s;
  s.window = window.name();
  s.zerofill_factor = zerofill_factor;
  s.record_length_us = static_cast<double>(nz) * dt;
  const double scale = wsum > 0.0 ? 2.0 / wsum : 0.0;
  for (std::size_t k = 0; k <= nz / 2; ++k) {
    s.freq_mhz.push_back(static_cast<double>(k) / (static_cast<double>(nz) * dt));
    s.amplitude.push_back(std::abs(spec[k]) * scale);
  }
  return s;
}

// --- polarization build-up -------------------------------------------------------

// p(d) = c0 - c1 exp(-(alpha + beta) d) + c2 exp(-2 gamma d), d the laser pulse length.
struct PolarizationModel {
  double c0 = 0.31, c1 = 0.51, c2 = 0.50;
  double alpha = 1.10, beta = 0.41, gamma = 0.022;

  void validate() const {
    for (double r : {alpha, beta, gamma})
      if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidParams("polarization rates must be >= 0");
  }

  double operator()(double d_us) const {
    return c0 - c1 * std::exp(-(alpha + beta) * d_us) + c2 * std::exp(-2.0 * gamma * d_us);
  }

  bool operator==(const PolarizationModel&) const = default;
};

inline std::vector<double> polarization_curve(const PolarizationModel& m, const std::vector<double>& d_us) {
  m.validate();
  std::vector<double> out;
  out.reserve(d_us.size());
  for (double d : d_us) out.push_back(m(d));
  return out;
}

struct CurveExtremum {
  double d_us;
  double p;
};

// Maximum of the model on [lo, hi]. The interior stationary point has a closed form.
inline CurveExtremum polarization_maximum(const PolarizationModel& m, double lo_us, double hi_us) {
  m.validate();
  if (!(lo_us <= hi_us)) throw InvalidParams("need lo <= hi");
  CurveExtremum best{lo_us, m(lo_us)};
  if (m(hi_us) > best.p) best = {hi_us, m(hi_us)};
  const double k = m.alpha + m.beta, g = 2.0 * m.gamma;
  if (k != g && m.c1 * k > 0.0 && m.c2 * g > 0.0) {
    const double d = std::log(m.c1 * k / (m.c2 * g)) / (k - g);
    if (d > lo_us && d < hi_us && m(d) > best.p) best = {d, m(d)};
  }
  return best;
}

struct PolarizationFit {
  PolarizationModel model;
  double residual_norm = 0.0;
  int iterations = 0;
  std::vector<double> residual_history;
};

namespace detail {

struct PolarizationFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const std::vector<double>& d;
  const std::vector<double>& p;

  int inputs() const { return 5; }
  int values() const { return static_cast<int>(d.size()); }

  // x = (c0, c1, c2, k = alpha + beta, gamma)
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    for (std::size_t i = 0; i < d.size(); ++i)
      r(static_cast<Eigen::Index>(i)) =
          x(0) - x(1) * std::exp(-x(3) * d[i]) + x(2) * std::exp(-2.0 * x(4) * d[i]) - p[i];
    return 0;
  }

  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const {
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double e1 = std::exp(-x(3) * d[i]), e2 = std::exp(-2.0 * x(4) * d[i]);
      j(row, 0) = 1.0;
      j(row, 1) = -e1;
      j(row, 2) = e2;
      j(row, 3) = x(1) * d[i] * e1;
      j(row, 4) = -2.0 * x(2) * d[i] * e2;
    }
    return 0;
  }
};

}  // namespace detail

// Levenberg-Marquardt fit of (c0, c1, c2, alpha + beta, gamma). The split of
// alpha + beta keeps the ratio of the initial guess.
inline PolarizationFit fit_polarization(const std::vector<double>& d_us, const std::vector<double>& p,
                                        const PolarizationModel& initial = {}, int max_iterations = 200) {
  if (d_us.size() != p.size()) throw DimensionMismatch("d and p differ in length");
  if (d_us.size() < 6) throw InvalidParams("need at least 6 points");
  initial.validate();
  detail::PolarizationFunctor f{d_us, p};
  Eigen::VectorXd x(5);
  x << initial.c0, initial.c1, initial.c2, initial.alpha + initial.beta, initial.gamma;

  Eigen::LevenbergMarquardt<detail::PolarizationFunctor> lm(f);
  lm.parameters.maxfev = 100 * max_iterations;
  PolarizationFit out;
  auto status = lm.minimizeInit(x);
  if (status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters)
    throw NoConvergence("improper fit input");
  out.residual_history.push_back(lm.fnorm);
  status = Eigen::LevenbergMarquardtSpace::Running;
  while (status == Eigen::LevenbergMarquardtSpace::Running) {
    if (out.iterations == max_iterations) throw NoConvergence("polarization fit did not converge");
    status = lm.minimizeOneStep(x);
    ++out.iterations;
    out.residual_history.push_back(lm.fnorm);
  }
  if (status == Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation)
    throw NoConvergence("polarization fit ran out of function evaluations");
  if (!x.allFinite()) throw NoConvergence("polarization fit diverged");

  // reject fits whose decay parameters are not pinned down by the data
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(d_us.size()), 5);
  f.df(x, jac);
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(jac).singularValues();
  if (!(sv(4) > 1e-8 * sv(0))) throw NoConvergence("polarization parameters are not identifiable");

  const double k0 = initial.alpha + initial.beta;
  const double share = k0 > 0.0 ? initial.alpha / k0 : 0.5;
  out.model = {x(0), x(1), x(2), share * x(3), (1.0 - share) * x(3), x(4)};
  out.residual_norm = lm.fnorm;
  return out;
}

// a + b sin(2 pi nu tau + c), b >= 0, c in (-pi, pi].
struct SineFit {
  double a = 0.0, b = 0.0, c = 0.0;
  double residual_norm = 0.0;
};

// Linear least squares in (a, b cos c, b sin c) with nu fixed.
inline SineFit fit_fid_amplitude(const std::vector<double>& tau, const std::vector<double>& signal, double nu_mhz) {
  if (tau.size() != signal.size()) throw DimensionMismatch("tau and signal differ in length");
  const auto n = static_cast<Eigen::Index>(tau.size());
  if (n < 3) throw NoConvergence("need at least three samples");
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = kTwoPi * nu_mhz * tau[static_cast<std::size_t>(i)];
    a(i, 0) = 1.0;
    a(i, 1) = std::sin(w);
    a(i, 2) = std::cos(w);
    y(i) = signal[static_cast<std::size_t>(i)];
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 3) throw NoConvergence("samples do not resolve the oscillation");
  const Eigen::VectorXd x = qr.solve(y);
  SineFit f;
  f.a = x(0);
  f.b = std::hypot(x(1), x(2));
  f.c = f.b > 0.0 ? std::atan2(x(2), x(1)) : 0.0;
  f.residual_norm = (a * x - y).norm();
  return f;
}

struct ExperimentalFidelities {
  double f180 = 0.0;
  double fu90 = 0.0;
  double fuc = 0.0;
  // set when any value exceeds 1
  bool unphysical = false;
};

// F_180 = sqrt(b1/b0), F_U90 = sqrt(b1/b_-1), F_Uc = sqrt(f)/F_180.
inline ExperimentalFidelities estimate_experimental_fidelities(double b0, double b1, double bm1, double f) {
  for (double v : {b0, b1, bm1, f})
    if (!(v > 0.0)) throw NonPositiveInput("amplitudes and scale factor must be positive");
  ExperimentalFidelities r;
  r.f180 = std::sqrt(b1 / b0);
  r.fu90 = std::sqrt(b1 / bm1);
  r.fuc = std::sqrt(f) / r.f180;
  r.unphysical = r.f180 > 1.0 || r.fu90 > 1.0 || r.fuc > 1.0;
  return r;
}

struct PolarizationOutcome {
  double polarization = 0.0;
  // P(|0,up>) after U_p relative to its value in rho_0; 1 for a perfect transfer
  double peak_ratio = 0.0;
  DensityState after_reset;
};

// Electron projected onto |0>, carbon state kept.
inline DensityState ideal_reset(const DensityState& rho) {
  const Matrix c = reduced_state(rho, Subsystem::carbon);
  Matrix m = Matrix::Zero(4, 4);
  m.topLeftCorner(2, 2) = c;
  return DensityState(m);
}

inline PolarizationOutcome polarization_protocol_sim(const Matrix& up) {
  const DensityState rho0 = initial_state();
  const DensityState after = evolve(rho0, up);
  PolarizationOutcome o;
  o.after_reset = ideal_reset(after);
  o.polarization = (o.after_reset.matrix(0, 0) - o.after_reset.matrix(1, 1)).real();
  o.peak_ratio = after.matrix(0, 0).real() / rho0.matrix(0, 0).real();
  return o;
}

inline PolarizationOutcome polarization_protocol_sim(const SystemParams& p, const PulseSequence& seq_up) {
  return polarization_protocol_sim(sequence_propagator(build_hamiltonian_subspace(p), seq_up));
}

}  // namespace nvctl
