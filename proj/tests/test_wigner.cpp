#include "quditkit/wigner.hpp"

#include <gtest/gtest.h>

using namespace quditkit;

namespace {

// Kernel built from the ladder-form displacement, independent of the cached
// rotation used by WignerKernel.
ComplexMatrix direct_kernel(SpinDimension dim, double theta, double phi) {
  const ComplexMatrix d = displacement(dim, theta, phi);
  return d * (2.0 * build_parity(dim).matrix) * d.adjoint();
}

ComplexMatrix random_hermitian(int d, std::uint64_t seed) {
  Rng rng(seed);
  ComplexMatrix g(d, d);
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < d; ++r) g(r, c) = rng.complex_normal();
  return 0.5 * (g + g.adjoint());
}

ComplexMatrix projector(const ComplexVector& v) { return v * v.adjoint(); }

}  // namespace

TEST(Parity, SpinHalfValues) {
  const ComplexMatrix pi = build_parity(SpinDimension(2)).matrix;
  EXPECT_NEAR(pi(0, 0).real(), (1 + std::sqrt(3.0)) / 4, 1e-14);
  EXPECT_NEAR(pi(1, 1).real(), (1 - std::sqrt(3.0)) / 4, 1e-14);
  EXPECT_EQ(std::abs(pi(0, 1)), 0.0);
}

TEST(Parity, UnitTraceAndDiagonal) {
  for (int d = 2; d <= 8; ++d) {
    const ComplexMatrix pi = build_parity(SpinDimension(d)).matrix;
    EXPECT_NEAR((2.0 * pi).trace().real(), 1.0, 1e-12) << d;
    EXPECT_LT(max_abs(pi - ComplexMatrix(pi.diagonal().asDiagonal())), 1e-15);
    EXPECT_TRUE(is_hermitian(pi, 1e-15));
  }
}

TEST(Parity, KernelSquaresToDimension) {
  // Tr(Delta^2) = d, the self-overlap required by traciality.
  for (int d = 2; d <= 8; ++d) {
    const ComplexMatrix pi2 = 2.0 * build_parity(SpinDimension(d)).matrix;
    EXPECT_NEAR((pi2 * pi2).trace().real(), static_cast<double>(d), 1e-10) << d;
  }
}

TEST(Grid, WeightsAndExactness) {
  for (int d = 2; d <= 8; ++d) {
    const auto g = PhaseSpaceGrid::for_dimension(SpinDimension(d));
    EXPECT_EQ(g.size(), static_cast<size_t>(16 * d * d));
    EXPECT_NEAR(g.total_weight(), 4 * kPi, 1e-9);
  }
  // integral of cos^2(theta) over the sphere = 4 pi / 3
  const auto g = PhaseSpaceGrid::gauss_legendre(5, 7);
  double acc = 0.0;
  for (const auto& p : g.points) acc += p.weight * std::pow(std::cos(p.theta), 2);
  EXPECT_NEAR(acc, 4 * kPi / 3, 1e-12);
  for (size_t i = 1; i < g.points.size(); ++i) EXPECT_LE(g.points[i - 1].theta, g.points[i].theta);
}

TEST(Kernel, MatchesDirectConstruction) {
  for (int d : {2, 3, 5, 8}) {
    const SpinDimension dim(d);
    const WignerKernel k(dim);
    EXPECT_LT(max_abs(k(0.0, 0.0) - 2.0 * k.parity().matrix), 1e-14);
    for (double theta : {0.3, 1.7, 3.0})
      for (double phi : {0.0, 2.1, 5.5}) EXPECT_LT(max_abs(k(theta, phi) - direct_kernel(dim, theta, phi)), 1e-12);
  }
}

TEST(Kernel, Covariance) {
  const SpinDimension dim(6);
  const WignerKernel k(dim);
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const double theta = rng.uniform(0, kPi), phi = rng.uniform(0, kTwoPi), beta = rng.uniform(-kPi, kPi);
    const ComplexMatrix z = snap(dim, jz_rotation_phases(dim, beta));
    EXPECT_LT(max_abs(z * k(theta, phi) * z.adjoint() - k(theta, phi + beta)), 1e-11);
  }
}

TEST(Wigner, GroundStateAtPole) {
  for (int d = 2; d <= 8; ++d) {
    const ComplexMatrix rho = projector(basis_state(d, 0));
    EXPECT_NEAR(wigner_at(rho, 0.0, 0.0), 2.0 * build_parity(SpinDimension(d)).matrix(0, 0).real(), 1e-12);
  }
}

TEST(Wigner, CoherentStatePeak) {
  const SpinDimension dim(8);
  const double theta0 = 1.2, phi0 = 2.0;
  const ComplexMatrix rho = projector(coherent_state(dim, theta0, phi0));
  const auto grid = PhaseSpaceGrid::for_dimension(dim);
  const auto scan = wigner_scan(rho, grid);
  const auto best = std::max_element(scan.begin(), scan.end(), [](auto& a, auto& b) { return a.w < b.w; });
  const double peak = wigner_at(rho, theta0, phi0);
  EXPECT_GE(peak, best->w - 1e-12);
  // nearest grid point to the true maximum
  EXPECT_NEAR(best->theta, theta0, 0.25);
  EXPECT_NEAR(std::remainder(best->phi - phi0, kTwoPi), 0.0, 0.25);
}

TEST(Wigner, EigenstatesArePhaseIndependentWithNegativity) {
  const SpinDimension dim(6);
  const auto grid = PhaseSpaceGrid::gauss_legendre(12, 9);
  for (int n = 0; n < 6; ++n) {
    const auto scan = wigner_scan(projector(basis_state(6, n)), grid);
    double min_w = 1e9;
    for (size_t row = 0; row < 12; ++row) {
      double lo = 1e9, hi = -1e9;
      for (size_t c = 0; c < 9; ++c) {
        lo = std::min(lo, scan[row * 9 + c].w);
        hi = std::max(hi, scan[row * 9 + c].w);
      }
      EXPECT_LT(hi - lo, 1e-9);
      min_w = std::min(min_w, lo);
    }
    if (n > 0 && n < 5) {
      EXPECT_LT(min_w, -1e-3) << n;
    }
  }
}

TEST(Wigner, SuperpositionSymmetry) {
  const int d = 7;
  const auto grid = PhaseSpaceGrid::gauss_legendre(6, 60);
  for (int k = 1; k < d; ++k) {
    const ComplexVector psi = (basis_state(d, 0) + basis_state(d, k)) / std::sqrt(2.0);
    const ComplexMatrix rho = projector(psi);
    for (const auto& p : grid.points) EXPECT_NEAR(wigner_at(rho, p.theta, p.phi), wigner_at(rho, p.theta, p.phi + kTwoPi / k), 1e-10);
    if (k > 1) {
      EXPECT_GT(std::abs(wigner_at(rho, 1.0, 0.0) - wigner_at(rho, 1.0, kPi / k)), 1e-4) << k;
    }
  }
}

TEST(Wigner, CatFringes) {
  const SpinDimension dim(8);
  const ComplexMatrix cat = projector(cat_state(dim));
  const ComplexMatrix mixture = 0.5 * (projector(coherent_state(dim, kPi / 2, 0.0)) + projector(coherent_state(dim, kPi / 2, kPi)));
  // lobes on the equator at phi = 0 and pi; fringes around phi = pi/2
  EXPECT_GT(wigner_at(cat, kPi / 2, 0.0), 0.5);
  EXPECT_GT(wigner_at(cat, kPi / 2, kPi), 0.5);
  double max_gap = 0.0, min_cat = 1e9;
  for (int i = 0; i <= 40; ++i) {
    const double theta = kPi * i / 40;
    const double gap = std::abs(wigner_at(cat, theta, kPi / 2) - wigner_at(mixture, theta, kPi / 2));
    max_gap = std::max(max_gap, gap);
    min_cat = std::min(min_cat, wigner_at(cat, theta, kPi / 2));
  }
  EXPECT_GT(max_gap, 0.1);
  EXPECT_LT(min_cat, -0.05);
}

TEST(Wigner, RejectsInvalidDensity) {
  EXPECT_THROW(wigner_at(ComplexMatrix(2.0 * identity(3)), 0, 0), std::invalid_argument);
  ComplexMatrix bad = identity(2) / 2.0;
  bad(0, 1) = 0.3;
  EXPECT_THROW(wigner_at(bad, 0, 0), std::invalid_argument);
  ComplexMatrix neg = ComplexMatrix::Zero(2, 2);
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  EXPECT_THROW(wigner_at(neg, 0, 0), std::invalid_argument);
}

TEST(Reconstruction, PureGroundState) {
  const SpinDimension dim(5);
  const ComplexMatrix rho = projector(basis_state(5, 0));
  const auto res = reconstruct_density(wigner_scan(rho, PhaseSpaceGrid::for_dimension(dim)), dim);
  EXPECT_LT(trace_distance(res.rho, rho), 1e-8);
  EXPECT_EQ(res.rank, 24);
  EXPECT_LT(res.residual_norm, 1e-9);
}

TEST(Reconstruction, RandomMixedStates) {
  for (int d : {3, 5, 8}) {
    const SpinDimension dim(d);
    const auto grid = PhaseSpaceGrid::for_dimension(dim);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const ComplexMatrix rho = random_density_matrix(d, d, 50 + s);
      const auto res = reconstruct_density(wigner_scan(rho, grid), dim);
      EXPECT_LT(trace_distance(res.rho, rho), 1e-6);
      EXPECT_NEAR(res.rho.trace().real(), 1.0, 1e-12);
      EXPECT_TRUE(is_hermitian(res.rho, 1e-14));
      EXPECT_LT(res.psd_distance, 1e-8);
    }
  }
}

TEST(Reconstruction, CatStateFidelity) {
  const SpinDimension dim(8);
  const ComplexVector cat = cat_state(dim);
  const auto res = reconstruct_density(wigner_scan(projector(cat), PhaseSpaceGrid::for_dimension(dim)), dim);
  EXPECT_GT((cat.adjoint() * res.rho * cat)(0, 0).real(), 0.999);
}

TEST(Reconstruction, NoisyScanReportsResidualAndNegativity) {
  const SpinDimension dim(4);
  const ComplexMatrix rho = projector(basis_state(4, 1));
  auto scan = wigner_scan(rho, PhaseSpaceGrid::for_dimension(dim));
  Rng rng(8);
  for (auto& s : scan) s.w += rng.normal(0.0, 0.05);
  const auto res = reconstruct_density(scan, dim);
  EXPECT_GT(res.residual_norm, 0.1);
  EXPECT_LT(trace_distance(res.rho, rho), 0.1);
}

TEST(Reconstruction, RankDeficientGridRejected) {
  const SpinDimension dim(4);
  // a single polar ring sees only phi-dependence at fixed theta
  const auto grid = PhaseSpaceGrid::gauss_legendre(1, 40);
  const auto scan = wigner_scan(projector(basis_state(4, 0)), grid);
  EXPECT_THROW(reconstruct_density(scan, dim), NumericalError);
  EXPECT_THROW(reconstruct_density(std::vector<WignerSample>(3), dim), NumericalError);
}

TEST(Traciality, ConstantFromSpinHalf) {
  const double c = traciality_constant();
  EXPECT_NEAR(c, 1.0, 1e-12);
  for (int d = 2; d <= 8; ++d) {
    const auto grid = PhaseSpaceGrid::for_dimension(SpinDimension(d));
    for (std::uint64_t s = 0; s < 2; ++s) {
      const ComplexMatrix a = random_hermitian(d, 10 * d + s), b = random_hermitian(d, 100 * d + s);
      EXPECT_NEAR(c * traciality_sum(a, b, grid), (a * b).trace().real(), 1e-6 * std::max(1.0, std::abs((a * b).trace())));
    }
  }
}
