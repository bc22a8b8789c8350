#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "spectrum.hpp"

namespace nvctl {

// Physical constants and couplings of the NV electron, the 14N and one 13C.
// Frequencies are in MHz, fields in mT, gyromagnetic ratios in MHz/mT.
struct SystemParams {
  double d_mhz = 2870.0;
  double b_mt = 14.8;
  double gamma_e = 28.0249;
  double gamma_c = 0.0107084;
  double a_n = -2.16;
  double p_quad = -4.95;
  double a_zz = -0.152;
  double a_zx = 0.110;
  std::optional<double> nu_e_override;
  std::optional<double> nu_c_override;
  std::optional<double> nu_n_override;

  // 14N gyromagnetic ratio; only used when nu_n_override is absent.
  static constexpr double kGammaN = 0.0030766;

  double nu_e() const { return nu_e_override.value_or(gamma_e * b_mt); }
  double nu_c() const { return nu_c_override.value_or(gamma_c * b_mt); }
  double nu_n() const { return nu_n_override.value_or(kGammaN * b_mt); }

  void validate() const {
    if (!(d_mhz > 0.0)) throw InvalidParams("zero-field splitting must be positive");
    if (!(b_mt >= 0.0)) throw InvalidParams("static field must be non-negative");
    for (double v : {gamma_e, gamma_c, a_n, p_quad, a_zz, a_zx, nu_e(), nu_c(), nu_n()})
      if (!std::isfinite(v)) throw InvalidParams("non-finite parameter");
  }

  // Anisotropy is what makes indirect control possible at all.
  void require_anisotropy() const {
    if (std::abs(a_zx) + std::abs(a_zz) == 0.0)
      throw InvalidParams("13C hyperfine coupling vanishes; nucleus is uncontrollable");
  }

  bool operator==(const SystemParams&) const = default;
};

enum class Branch { plus = +1, minus = -1 };

// Hermitian operator H/2pi in MHz together with its basis labels.
struct Hamiltonian {
  Matrix matrix;
  std::vector<std::string> basis_labels;

  Eigen::Index dim() const { return matrix.rows(); }
};

// Operators on the 4-dim working subspace {|0>,|-1>} (x) {up, down}.
// The electron pseudo-spin has s_z = +1/2 on |0> and -1/2 on |-1>.
namespace subspace_ops {

inline Matrix sx() { return kron(spin_half::x(), identity(2)); }
inline Matrix sy() { return kron(spin_half::y(), identity(2)); }
inline Matrix sz() { return kron(spin_half::z(), identity(2)); }
inline Matrix ix() { return kron(identity(2), spin_half::x()); }
inline Matrix iy() { return kron(identity(2), spin_half::y()); }
inline Matrix iz() { return kron(identity(2), spin_half::z()); }

// Projector onto the m_S = 0 manifold.
inline Matrix p0() {
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = m(1, 1) = 1.0;
  return m;
}

inline std::vector<std::string> labels(Branch transition = Branch::minus) {
  const std::string e = transition == Branch::minus ? "-1" : "+1";
  return {"|0,up>", "|0,down>", "|" + e + ",up>", "|" + e + ",down>"};
}

}  // namespace subspace_ops

struct NuclearFrequencies {
  double nu_c;
  double nu_minus;
  double nu_plus;
};

inline NuclearFrequencies nuclear_frequencies(const SystemParams& p) {
  p.validate();
  const double nc = p.nu_c();
  return {nc,
          std::hypot(p.a_zx, nc + p.a_zz),
          std::hypot(p.a_zx, nc - p.a_zz)};
}

inline double rad_to_deg(double r) { return r * 180.0 / kPi; }
inline double deg_to_rad(double d) { return d * kPi / 180.0; }

// Tilt of the 13C quantization axis from z while the electron sits in m_S = +-1,
// in degrees on (-180, 180].
inline double quantization_angle(const SystemParams& p, Branch branch) {
  p.validate();
  const double sign = branch == Branch::plus ? 1.0 : -1.0;
  const double den = p.a_zz - sign * p.nu_c();
  if (p.a_zx == 0.0 && den == 0.0)
    throw DegenerateAxis("13C quantization axis undefined for this branch");
  double deg = rad_to_deg(std::atan2(p.a_zx, den));
  if (deg <= -180.0) deg += 360.0;
  return deg;
}

struct QuantizationAngles {
  double theta_plus;
  double theta_minus;
};

inline QuantizationAngles quantization_angles(const SystemParams& p) {
  return {quantization_angle(p, Branch::plus), quantization_angle(p, Branch::minus)};
}

// |phi> = cos(t/2)|up> + sin(t/2)|down>, |psi> = -sin(t/2)|up> + cos(t/2)|down>.
inline std::pair<Vector, Vector> nuclear_eigenstates(double theta_deg) {
  const double h = deg_to_rad(theta_deg) / 2.0;
  Vector phi(2), psi(2);
  phi << std::cos(h), std::sin(h);
  psi << -std::sin(h), std::cos(h);
  return {phi, psi};
}

struct EigenStructure {
  double theta_plus = 0.0;
  double theta_minus = 0.0;
  double theta_zero = 0.0;
  NuclearFrequencies freqs{};
  Vector phi_plus, psi_plus, phi_minus, psi_minus;
};

inline EigenStructure eigen_structure(const SystemParams& p) {
  EigenStructure es;
  const auto angles = quantization_angles(p);
  es.theta_plus = angles.theta_plus;
  es.theta_minus = angles.theta_minus;
  es.freqs = nuclear_frequencies(p);
  std::tie(es.phi_plus, es.psi_plus) = nuclear_eigenstates(es.theta_plus);
  std::tie(es.phi_minus, es.psi_minus) = nuclear_eigenstates(es.theta_minus);
  return es;
}

// Full electron (S=1) x 14N (I=1) x 13C (I=1/2) Hamiltonian, 18-dim, lab frame.
inline Hamiltonian build_hamiltonian_full(const SystemParams& p) {
  p.validate();
  const Matrix sz = spin_one::z();
  const Matrix e3 = identity(3), e2 = identity(2);
  const Matrix Sz = kron(kron(sz, e3), e2);
  const Matrix Nz = kron(kron(e3, sz), e2);
  const Matrix Iz = kron(kron(e3, e3), spin_half::z());
  const Matrix Ix = kron(kron(e3, e3), spin_half::x());

  Hamiltonian h;
  h.matrix = p.d_mhz * Sz * Sz - p.nu_e() * Sz + p.p_quad * Nz * Nz - p.nu_n() * Nz -
             p.nu_c() * Iz + p.a_n * Sz * Nz + p.a_zz * Sz * Iz + p.a_zx * Sz * Ix;
  const std::array<const char*, 3> ms{"+1", "0", "-1"};
  const std::array<const char*, 2> mc{"up", "down"};
  for (auto s : ms)
    for (auto n : ms)
      for (auto c : mc) h.basis_labels.push_back(std::string("|") + s + "," + n + "," + c + ">");
  return h;
}

inline Eigen::Index full_index(int m_s, int m_n, int carbon_down) {
  return (1 - m_s) * 6 + (1 - m_n) * 2 + carbon_down;
}

enum class Frame { lab, rotating };

// Electron x 13C Hamiltonian restricted to m_N = +1, basis (|+1>,|0>,|-1>) x {up, down}.
// In the rotating frame every m_S block loses its constant electronic offset,
// leaving only the nuclear Zeeman and hyperfine parts.
inline Hamiltonian build_hamiltonian_ec(const SystemParams& p, Frame frame = Frame::lab) {
  p.validate();
  const Matrix sz = spin_one::z();
  const Matrix Sz = kron(sz, identity(2));
  const Matrix Iz = kron(identity(3), spin_half::z());
  const Matrix Ix = kron(identity(3), spin_half::x());
  Hamiltonian h;
  h.matrix = -p.nu_c() * Iz + p.a_zz * Sz * Iz + p.a_zx * Sz * Ix;
  if (frame == Frame::lab) h.matrix += p.d_mhz * Sz * Sz - (p.nu_e() - p.a_n) * Sz;
  h.basis_labels = {"|+1,up>", "|+1,down>", "|0,up>", "|0,down>", "|-1,up>", "|-1,down>"};
  return h;
}

// Working-subspace Hamiltonian in the frame rotating at the m_S=0 <-> transition
// carrier:  (-nu_C - A_zz/2) I_z + A_zz s_z I_z + A_zx s_z I_x - (A_zx/2) I_x.
// For the m_S=0 <-> +1 transition the pseudo-spin lower level is |+1>, which flips
// the sign of both hyperfine components. detuning_mhz is (transition - carrier).
inline Hamiltonian build_hamiltonian_subspace(const SystemParams& p,
                                              Branch transition = Branch::minus,
                                              double detuning_mhz = 0.0) {
  p.validate();
  const double s = transition == Branch::minus ? 1.0 : -1.0;
  const double azz = s * p.a_zz, azx = s * p.a_zx;
  using namespace subspace_ops;
  Hamiltonian h;
  h.matrix = (-p.nu_c() - azz / 2.0) * iz() + azz * sz() * iz() + azx * sz() * ix() -
             (azx / 2.0) * ix() - detuning_mhz * sz();
  h.basis_labels = labels(transition);
  return h;
}

// U_T = |+1><+1| (x) R_y(theta_+) + |0><0| (x) E + |-1><-1| (x) R_y(theta_-),
// acting on the 6-dim space of build_hamiltonian_ec. U_T^dag H U_T is diagonal
// in the 13C index within every m_S block.
inline Matrix diagonalizing_transform(const SystemParams& p) {
  const auto a = quantization_angles(p);
  Matrix u = Matrix::Zero(6, 6);
  u.block(0, 0, 2, 2) = spin_half::rotation(deg_to_rad(a.theta_plus), 0, 1, 0);
  u.block(2, 2, 2, 2) = identity(2);
  u.block(4, 4, 2, 2) = spin_half::rotation(deg_to_rad(a.theta_minus), 0, 1, 0);
  return u;
}

struct EsrLine {
  double offset_mhz;
  double probability;
};

// The four m_S=0 <-> +-1 lines (m_N = +1) relative to D -+ (nu_e - A_N).
// Probabilities are written in terms of the axis of the lower-energy 13C eigenstate
// of the m_S = +-1 manifold. For m_S = -1 that axis is the quantization axis itself;
// for m_S = +1 the effective field points the other way, so the axis is rotated by 180 deg.
inline std::vector<EsrLine> esr_lines(const SystemParams& p, Branch branch) {
  const auto f = nuclear_frequencies(p);
  double theta = quantization_angle(p, branch);
  if (branch == Branch::plus) theta -= 180.0;
  const double nu = branch == Branch::plus ? f.nu_plus : f.nu_minus;
  const double s2 = std::pow(std::sin(deg_to_rad(theta) / 2.0), 2);
  const double c2 = 1.0 - s2;
  return {{(nu + f.nu_c) / 2.0, s2},
          {-(nu - f.nu_c) / 2.0, c2},
          {(nu - f.nu_c) / 2.0, c2},
          {-(nu + f.nu_c) / 2.0, s2}};
}

// Lorentzian rendering; linewidth is the full width at half maximum.
inline Spectrum esr_spectrum(const std::vector<EsrLine>& lines, double linewidth_mhz,
                             const std::vector<double>& grid_mhz) {
  if (!(linewidth_mhz > 0.0)) throw InvalidParams("linewidth must be positive");
  if (grid_mhz.empty()) throw BadGrid("empty frequency grid");
  for (std::size_t i = 1; i < grid_mhz.size(); ++i)
    if (!(grid_mhz[i] > grid_mhz[i - 1])) throw BadGrid("frequency grid must increase strictly");
  const double hw2 = linewidth_mhz * linewidth_mhz / 4.0;
  Spectrum s;
  s.window = "lorentzian";
  s.freq_mhz = grid_mhz;
  s.amplitude.assign(grid_mhz.size(), 0.0);
  for (std::size_t i = 0; i < grid_mhz.size(); ++i)
    for (const auto& l : lines) {
      const double d = grid_mhz[i] - l.offset_mhz;
      s.amplitude[i] += l.probability * hw2 / (d * d + hw2);
    }
  return s;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = 0.5 * (lo + hi);
    return v;
  }
  for (std::size_t i = 0; i < n; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

}  // namespace nvctl
