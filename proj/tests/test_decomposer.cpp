#include "quditkit/decomposer.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace quditkit;

namespace {

SnapDisplacementProgram random_program(SpinDimension dim, int depth, std::uint64_t seed) {
  Rng rng(seed);
  SnapDisplacementProgram p = SnapDisplacementProgram::identity(dim, depth);
  for (double& t : p.thetas) t = rng.uniform(0.0, kPi);
  for (auto& s : p.snaps)
    for (double& x : s.phases) x = rng.uniform(-kPi, kPi);
  return p;
}

}  // namespace

TEST(Reconstruct, TrivialPrograms) {
  const SpinDimension dim(4);
  EXPECT_LT(max_abs(reconstruct(SnapDisplacementProgram::identity(dim, 0)) - identity(4)), 1e-15);
  auto one = SnapDisplacementProgram::identity(dim, 1);
  one.thetas[0] = kPi / 2;
  EXPECT_LT(max_abs(reconstruct(one) - displacement(dim, kPi / 2, 0.0)), 1e-13);
}

TEST(Reconstruct, ExplicitProduct) {
  const SpinDimension dim(5);
  const auto p = random_program(dim, 3, 11);
  ComplexMatrix expect = snap(dim, p.snaps[0]);
  for (int k = 0; k < 3; ++k) expect = snap(dim, p.snaps[k + 1]) * displacement(dim, p.thetas[k], 0.0) * expect;
  const ComplexMatrix u = reconstruct(p);
  EXPECT_LT(max_abs(u - expect), 1e-12);
  EXPECT_LT(unitarity_residual(u), 1e-9);
}

TEST(Reconstruct, RejectsMalformed) {
  auto p = SnapDisplacementProgram::identity(SpinDimension(3), 2);
  p.snaps.pop_back();
  EXPECT_THROW(reconstruct(p), std::invalid_argument);
  p = SnapDisplacementProgram::identity(SpinDimension(3), 2);
  p.snaps[1] = SnapPhases::zeros(4);
  EXPECT_THROW(reconstruct(p), std::invalid_argument);
}

TEST(PiHalf, ConjugationByJzGivesInverse) {
  for (int d = 2; d <= 9; ++d) {
    const SpinDimension dim(d);
    const ComplexMatrix a = displacement(dim, kPi / 2, 0.0);
    const ComplexMatrix conj = snap(dim, jz_rotation_phases(dim, -kPi)) * a * snap(dim, jz_rotation_phases(dim, kPi));
    EXPECT_LT(phase_aligned_distance(conj, a.adjoint()), 1e-12) << d;
    // D(pi/2, pi) D(pi/2, 0) as two pi/2 layers with a Jz SNAP of angle pi between them
    SnapDisplacementProgram p = SnapDisplacementProgram::identity(dim, 2, SynthesisMode::pi_half_canonical);
    p.snaps[1] = jz_rotation_phases(dim, -kPi);
    p.snaps[2] = jz_rotation_phases(dim, kPi);
    EXPECT_LT(phase_aligned_distance(reconstruct(p), identity(d)), 1e-12);
    EXPECT_LT(phase_aligned_distance(displacement(dim, kPi / 2, kPi) * a, identity(d)), 1e-12);
  }
}

TEST(PiHalf, CanonicalConversionIsExact) {
  for (int d = 2; d <= 8; ++d) {
    const SpinDimension dim(d);
    const auto p = random_program(dim, d - 1, 100 + d);
    const auto q = to_pi_half_canonical(p);
    EXPECT_EQ(q.depth(), 2 * p.depth());
    for (double t : q.thetas) EXPECT_EQ(t, kPi / 2);
    EXPECT_LT(phase_aligned_distance(reconstruct(q), reconstruct(p)), 1e-11) << d;
  }
}

TEST(PiHalf, InverseProgram) {
  for (int d : {2, 3, 6}) {
    const SpinDimension dim(d);
    const auto p = random_program(dim, 3, 7);
    EXPECT_LT(phase_aligned_distance(reconstruct(inverse_program(p)), reconstruct(p).adjoint()), 1e-11);
    const auto q = to_pi_half_canonical(p);
    const auto qi = inverse_program(q);
    EXPECT_EQ(qi.mode, SynthesisMode::pi_half_canonical);
    EXPECT_LT(phase_aligned_distance(reconstruct(qi), reconstruct(q).adjoint()), 1e-11);
  }
}

TEST(Counting, ParameterCount) {
  EXPECT_EQ(parameter_count(4, 3, SynthesisMode::general), 15);
  EXPECT_EQ(parameter_count(2, 1, SynthesisMode::general), 3);
  EXPECT_EQ(parameter_count(4, 3, SynthesisMode::pi_half_canonical), 12);
  EXPECT_EQ(minimal_depth(8), 7);
  for (int d = 2; d <= 12; ++d) {
    EXPECT_GE(parameter_count(d, minimal_depth(d), SynthesisMode::general), d * d - 1);
    EXPECT_LT(parameter_count(d, minimal_depth(d) - 1, SynthesisMode::general), d * d - 1);
  }
  EXPECT_THROW(parameter_count(1, 1, SynthesisMode::general), std::invalid_argument);
  EXPECT_THROW(minimal_depth(1), std::invalid_argument);
}

TEST(Haar, UnitaryAndReproducible) {
  for (int d = 2; d <= 10; ++d) {
    const ComplexMatrix u = haar_random_unitary(d, 42);
    EXPECT_LT(unitarity_residual(u), 1e-12);
    EXPECT_EQ(max_abs(u - haar_random_unitary(d, 42)), 0.0);
    EXPECT_GT(max_abs(u - haar_random_unitary(d, 43)), 1e-3);
  }
}

TEST(Haar, EigenphasesUniform) {
  const int d = 4, samples = 2000;
  std::vector<double> phases;
  for (int s = 0; s < samples; ++s) {
    Eigen::ComplexEigenSolver<ComplexMatrix> es(haar_random_unitary(d, 1000 + static_cast<std::uint64_t>(s)));
    for (int k = 0; k < d; ++k) phases.push_back((std::arg(es.eigenvalues()(k)) + kPi) / kTwoPi);
  }
  std::sort(phases.begin(), phases.end());
  double ks = 0.0;
  const double n = static_cast<double>(phases.size());
  for (size_t i = 0; i < phases.size(); ++i) {
    ks = std::max({ks, std::abs((i + 1) / n - phases[i]), std::abs(phases[i] - i / n)});
  }
  // 1% critical value for the number of independent matrices.
  EXPECT_LT(ks, 1.63 / std::sqrt(static_cast<double>(samples)));
}

TEST(Commutator, CouplesNeighbouringLevels) {
  for (int d = 2; d <= 9; ++d) {
    const SpinDimension dim(d);
    const auto ops = build_angular_momentum(dim);
    for (int n = 0; n + 1 < d; ++n) {
      const ComplexMatrix c = jy_projector_commutator(dim, n);
      const ComplexMatrix direct = kI * (ops.jy * cumulative_projector(dim, n) - cumulative_projector(dim, n) * ops.jy);
      EXPECT_LT(max_abs(c - direct), 1e-15);
      ComplexMatrix expect = ComplexMatrix::Zero(d, d);
      const double g = 0.5 * std::sqrt(static_cast<double>((n + 1) * (d - n - 1)));
      expect(n, n + 1) = expect(n + 1, n) = -g;
      EXPECT_LT(max_abs(c - expect), 1e-14);
    }
  }
}

TEST(Objective, GradientMatchesFiniteDifference) {
  for (SynthesisMode mode : {SynthesisMode::general, SynthesisMode::pi_half_canonical}) {
    for (int d : {2, 4, 6}) {
      const SpinDimension dim(d);
      const ProgramObjective obj(SynthesisTarget::unitary(haar_random_unitary(d, 5)), dim, d, mode);
      Rng rng(9);
      RealVector x(obj.size());
      for (int i = 0; i < x.size(); ++i) x(i) = rng.uniform(-3, 3);
      RealVector g, scratch;
      const double f = obj(x, g);
      const auto prog = obj.unpack(x);
      EXPECT_NEAR(f, 1.0 - unitary_fidelity(haar_random_unitary(d, 5), reconstruct(prog)), 1e-12);
      for (int i = 0; i < x.size(); ++i) {
        const double h = 1e-6;
        RealVector xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        const double fd = (obj(xp, scratch) - obj(xm, scratch)) / (2 * h);
        EXPECT_NEAR(g(i), fd, 1e-7) << "d=" << d << " i=" << i;
      }
    }
  }
}

TEST(Decompose, SingleDisplacement) {
  const SpinDimension dim(5);
  const auto res = decompose(displacement(dim, kPi / 2, 0.0), 1, SynthesisMode::general, {.restarts = 20, .seed = 3});
  EXPECT_LT(res.infidelity, 1e-10);
  EXPECT_NEAR(1.0 - unitary_fidelity(displacement(dim, kPi / 2, 0.0), reconstruct(res.program)), res.infidelity, 1e-12);
}

TEST(Decompose, RandomTargetsAtDepthD) {
  for (int d : {2, 3, 4, 5}) {
    for (std::uint64_t s = 0; s < 3; ++s) {
      const ComplexMatrix target = haar_random_unitary(d, 77 + s);
      const auto res = decompose(target, d, SynthesisMode::general, {.seed = s});
      EXPECT_LT(res.infidelity, 1e-6) << d;
      EXPECT_NEAR(1.0 - unitary_fidelity(target, reconstruct(res.program)), res.infidelity, 1e-12);
    }
  }
}

TEST(Decompose, TooShallowFails) {
  const int d = 5;
  const auto res = decompose(haar_random_unitary(d, 5), d - 2, SynthesisMode::general, {.restarts = 5, .seed = 1});
  EXPECT_GT(res.infidelity, 1e-3);
}

TEST(Decompose, DeterministicAcrossThreadCounts) {
  const ComplexMatrix target = haar_random_unitary(3, 8);
  DecomposeOptions a{.restarts = 6, .seed = 12, .stop_at_threshold = false, .threads = 1};
  DecomposeOptions b = a;
  b.threads = 3;
  const auto ra = decompose(target, 2, SynthesisMode::general, a);
  const auto rb = decompose(target, 2, SynthesisMode::general, b);
  EXPECT_EQ(ra.best_restart, rb.best_restart);
  EXPECT_EQ(ra.restart_infidelities, rb.restart_infidelities);
  EXPECT_EQ(max_abs(reconstruct(ra.program) - reconstruct(rb.program)), 0.0);
}

TEST(Decompose, PiHalfModeMatchesGeneral) {
  const int d = 3;
  const ComplexMatrix target = haar_random_unitary(d, 21);
  const auto general = decompose(target, d, SynthesisMode::general, {.seed = 2});
  const auto canonical = decompose(target, 2 * d, SynthesisMode::pi_half_canonical, {.seed = 2});
  EXPECT_LT(general.infidelity, 1e-8);
  EXPECT_LT(canonical.infidelity, 1e-8);
  for (double t : canonical.program.thetas) EXPECT_EQ(t, kPi / 2);
}

TEST(Decompose, MoreLayersNeverWorse) {
  const int d = 3;
  const ComplexMatrix target = haar_random_unitary(d, 31);
  double previous = 1.0;
  for (int n = 0; n <= d; ++n) {
    const auto res = decompose(target, n, SynthesisMode::general, {.restarts = 20, .seed = 4, .stop_at_threshold = false});
    EXPECT_LE(res.infidelity, previous + 1e-9) << n;
    previous = res.infidelity;
  }
}

TEST(Decompose, RejectsNonUnitary) {
  EXPECT_THROW(decompose(ComplexMatrix(2.0 * identity(3)), 2, SynthesisMode::general), std::invalid_argument);
  EXPECT_THROW(decompose(identity(3), -1, SynthesisMode::general), std::invalid_argument);
}

TEST(Synthesize, StatePreparation) {
  const SpinDimension dim(6);
  const ComplexVector target = haar_random_unitary(6, 3).col(0);
  const auto res = synthesize(SynthesisTarget::state(basis_state(6, 0), target), dim, 5, SynthesisMode::general, {.seed = 1});
  EXPECT_LT(res.infidelity, 1e-9);
  EXPECT_NEAR(state_fidelity(target, reconstruct(res.program) * basis_state(6, 0)), 1.0, 1e-9);
}
