#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace nvctl;

TEST(Fidelity, IdealOperationsReachUnity) {
  const SystemParams p;
  const Matrix uc = ideal_coherence_unitary(p);
  EXPECT_LT(unitarity_defect(uc), 1e-12);
  EXPECT_NEAR(fidelity(uc, build_target("u_c", p)), 1.0, 1e-12);
  EXPECT_NEAR(fidelity(uc.adjoint(), build_target("u_c_dagger", p)), 1.0, 1e-12);
  EXPECT_NEAR(fidelity(u90_gate(), build_target("u_90", p)), 1.0, 1e-12);
  EXPECT_NEAR(fidelity(ut_reference(p, 0.5), build_target("u_t", p)), 1.0, 1e-12);
}

TEST(Fidelity, CoherenceStateHasCarbonSuperpositions) {
  const SystemParams p;
  const DensityState rc = coherence_state(p);
  EXPECT_NO_THROW(rc.validate());
  EXPECT_NEAR(rc.purity(), 0.5, 1e-12);
  EXPECT_NEAR(bloch_vector(rc, Subsystem::carbon).norm(), std::sqrt(0.5), 1e-12);
}

TEST(Fidelity, PseudoHadamardRelation) {
  // U_H = i exp(-i(pi/2)I_z) U_90 exp(-i(pi/2)I_z) is the carbon Hadamard
  Matrix h2(2, 2);
  h2 << 1.0, 1.0, 1.0, -1.0;
  h2 /= std::sqrt(2.0);
  EXPECT_LT((hadamard_gate() - kron(identity(2), h2)).norm(), 1e-12);
}

TEST(Fidelity, PolarizationFromIdealUp) {
  // a unitary that maps rho_0 to rho_p: swap |0,down> with |-1,up>
  Matrix u = Matrix::Zero(4, 4);
  u(0, 0) = u(3, 3) = 1.0;
  u(2, 1) = u(1, 2) = 1.0;
  EXPECT_NEAR(fidelity(u, build_target("u_p", SystemParams{})), 1.0, 1e-12);
}

TEST(Fidelity, BoundedAndPhaseInvariant) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ph(0.0, kTwoPi);
  const SystemParams p;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix u = nvtest::random_unitary(rng, 4);
    const cplx g = std::polar(1.0, ph(rng));
    for (const auto& name : target_names()) {
      const Target t = build_target(name, p);
      const double f = fidelity(u, t);
      EXPECT_GE(f, 0.0);
      EXPECT_LE(f, 1.0);
      EXPECT_NEAR(fidelity(g * u, t), f, 1e-12);
      const double fr = fidelity(u, t, GateMode::relaxed);
      EXPECT_GE(fr, f - 1e-12);
      EXPECT_LE(fr, 1.0);
    }
  }
}

TEST(Fidelity, RelaxedModeIgnoresManifoldPhase) {
  const Matrix z = hermitian_propagator(subspace_ops::sz(), 0.3);
  const Target t = custom_target(u90_gate());
  EXPECT_LT(fidelity(z * u90_gate(), t), 0.999);
  EXPECT_NEAR(fidelity(z * u90_gate(), t, GateMode::relaxed), 1.0, 1e-12);
}

TEST(Fidelity, StateFidelityErrors) {
  const DensityState a = initial_state();
  EXPECT_THROW(state_fidelity(a, DensityState(Matrix::Identity(2, 2) / 2.0)), DimensionMismatch);
  EXPECT_THROW(state_fidelity(a, DensityState(Matrix::Zero(4, 4))), ZeroPurity);
  EXPECT_THROW(build_target("u_nope", SystemParams{}), UnknownTarget);
  EXPECT_THROW(gate_fidelity(identity(6), identity(6)), DimensionMismatch);
  EXPECT_THROW(custom_target(2.0 * identity(4)), InvalidParams);
}

TEST(Fidelity, RobustAverageIsUniformMean) {
  const SystemParams p;
  const Hamiltonian h = build_hamiltonian_subspace(p);
  std::mt19937_64 rng(32);
  const PulseSequence s = nvtest::random_sequence(rng, 3);
  const Target t = build_target("u_p", p);
  const RobustnessRange r{0.47, 0.53, 5};
  const auto f = sample_fidelities(s, t, r, h);
  ASSERT_EQ(f.size(), 5u);
  double mean = 0.0;
  for (double v : f) mean += v / 5.0;
  EXPECT_NEAR(robust_fidelity(s, t, r, h), mean, 1e-14);

  PulseSequence mid = s;
  mid.rabi_mhz = 0.5;
  EXPECT_NEAR(robust_fidelity(s, t, {0.47, 0.53, 1}, h), fidelity(sequence_propagator(h, mid), t), 1e-14);
  EXPECT_THROW((RobustnessRange{0.6, 0.4, 3}.validate()), InvalidParams);
  EXPECT_THROW((RobustnessRange{0.4, 0.6, 0}.validate()), InvalidParams);
}

TEST(Fidelity, UtSequenceMovesDownPopulation) {
  const SystemParams p;
  const Matrix u = ut_reference(p, 0.5);
  // basis |0,up>, |0,down>, |+1,up>, |+1,down>
  EXPECT_GT(std::norm(u(3, 1)), 0.85);
  EXPECT_LT(std::norm(u(2, 0)), 0.1);
  EXPECT_THROW(ut_sequence(p, 0.0), InvalidParams);
}
