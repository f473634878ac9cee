#pragma once

#include "quditkit/core.hpp"
#include "quditkit/gates.hpp"
#include "quditkit/parallel.hpp"
#include "quditkit/spin_algebra.hpp"

#include <vector>

namespace quditkit {

/// Parity-like operator Pi_j with
///   2 Pi_mm = sum_{l=0}^{2j} (2l+1)/(2j+1) <j m; l 0 | j m>.
struct SpinParityOperator {
  SpinDimension dim{2};
  ComplexMatrix matrix;
};

inline SpinParityOperator build_parity(SpinDimension dim) {
  const HalfInteger j{dim.twice_j()};
  ComplexMatrix pi = ComplexMatrix::Zero(dim.d(), dim.d());
  for (int n = 0; n < dim.d(); ++n) {
    const HalfInteger m = transmon_to_spin_index(dim, n).second;
    double acc = 0.0;
    for (int l = 0; l <= dim.twice_j(); ++l) {
      acc += (2.0 * l + 1.0) / dim.d() * clebsch_gordan(j, m, HalfInteger{2 * l}, HalfInteger{0}, j, m);
    }
    pi(n, n) = 0.5 * acc;
  }
  return {dim, pi};
}

/// Product quadrature on the sphere: Gauss-Legendre in cos(theta) times a
/// uniform rule in phi.
struct PhaseSpaceGrid {
  struct Point {
    double theta = 0.0;
    double phi = 0.0;
    double weight = 0.0;
  };
  std::vector<Point> points;

  size_t size() const { return points.size(); }

  double total_weight() const {
    double s = 0.0;
    for (const auto& p : points) s += p.weight;
    return s;
  }

  static PhaseSpaceGrid gauss_legendre(int n_theta, int n_phi);

  /// Default 4d x 4d grid.
  static PhaseSpaceGrid for_dimension(SpinDimension dim) { return gauss_legendre(4 * dim.d(), 4 * dim.d()); }
};

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]
/// (Golub-Welsch).
inline std::pair<RealVector, RealVector> gauss_legendre_rule(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre_rule: need at least one node");
  RealVector diag = RealVector::Zero(n), sub(std::max(0, n - 1));
  for (int k = 1; k < n; ++k) sub(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  Eigen::SelfAdjointEigenSolver<RealMatrix> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  RealVector w(n);
  for (int k = 0; k < n; ++k) w(k) = 2.0 * es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
  return {es.eigenvalues(), w};
}

inline PhaseSpaceGrid PhaseSpaceGrid::gauss_legendre(int n_theta, int n_phi) {
  if (n_theta < 1 || n_phi < 1) throw std::invalid_argument("grid needs at least one node per axis");
  const auto [x, w] = gauss_legendre_rule(n_theta);
  PhaseSpaceGrid g;
  g.points.reserve(static_cast<size_t>(n_theta) * static_cast<size_t>(n_phi));
  // theta ascending: x descending
  for (int i = n_theta - 1; i >= 0; --i) {
    const double theta = std::acos(std::clamp(x(i), -1.0, 1.0));
    for (int k = 0; k < n_phi; ++k) g.points.push_back({theta, kTwoPi * k / n_phi, w(i) * kTwoPi / n_phi});
  }
  return g;
}

/// Stratonovich kernel Delta(theta, phi) = D(theta, phi) (2 Pi) D(theta, phi)^dagger.
class WignerKernel {
 public:
  explicit WignerKernel(SpinDimension dim) : dim_(dim), parity_(build_parity(dim)), rot_(dim) {
    twice_parity_ = 2.0 * parity_.matrix.diagonal();
  }

  SpinDimension dim() const { return dim_; }
  const SpinParityOperator& parity() const { return parity_; }

  ComplexMatrix operator()(double theta, double phi) const {
    // D = Z(phi) Y(theta) Z(-phi); conjugating a diagonal by Z(-phi) is trivial.
    ComplexVector z(dim_.d());
    for (int n = 0; n < dim_.d(); ++n) z(n) = std::exp(-kI * (phi * (dim_.j() - n)));
    const ComplexMatrix d = z.asDiagonal() * rot_(theta);
    return d * twice_parity_.asDiagonal() * d.adjoint();
  }

  /// Tr(op Delta(theta, phi)) for any operator.
  Complex transform(const ComplexMatrix& op, double theta, double phi) const {
    const ComplexMatrix k = (*this)(theta, phi);
    return (op.transpose().cwiseProduct(k)).sum();
  }

 private:
  SpinDimension dim_;
  SpinParityOperator parity_;
  YRotation rot_;
  ComplexVector twice_parity_;
};

/// W(theta, phi) = Tr[rho Delta(theta, phi)].
inline double wigner_at(const ComplexMatrix& rho, double theta, double phi) {
  require_density_matrix(rho, "wigner_at");
  const WignerKernel kernel(SpinDimension(static_cast<int>(rho.rows())));
  const Complex w = kernel.transform(rho, theta, phi);
  if (std::abs(w.imag()) > 1e-10) throw NumericalError("wigner_at: kernel expectation is not real");
  return w.real();
}

struct WignerSample {
  double theta = 0.0;
  double phi = 0.0;
  double w = 0.0;
};

inline std::vector<WignerSample> wigner_scan(const ComplexMatrix& rho, const PhaseSpaceGrid& grid, int threads = 1) {
  require_density_matrix(rho, "wigner_scan");
  const WignerKernel kernel(SpinDimension(static_cast<int>(rho.rows())));
  std::vector<WignerSample> out(grid.size());
  parallel_for(static_cast<int>(grid.size()), threads, [&](int i) {
    const auto& p = grid.points[static_cast<size_t>(i)];
    const Complex w = kernel.transform(rho, p.theta, p.phi);
    out[static_cast<size_t>(i)] = {p.theta, p.phi, w.real()};
  });
  return out;
}

/// Orthonormal (Tr(G_a G_b) = delta_ab) traceless Hermitian basis of size
/// d^2 - 1: symmetric and antisymmetric off-diagonal elements followed by
/// d - 1 diagonal ones.
inline std::vector<ComplexMatrix> traceless_hermitian_basis(int d) {
  std::vector<ComplexMatrix> basis;
  const double r = 1.0 / std::sqrt(2.0);
  for (int a = 0; a < d; ++a)
    for (int b = a + 1; b < d; ++b) {
      ComplexMatrix s = ComplexMatrix::Zero(d, d), t = ComplexMatrix::Zero(d, d);
      s(a, b) = s(b, a) = r;
      t(a, b) = -kI * r;
      t(b, a) = kI * r;
      basis.push_back(std::move(s));
      basis.push_back(std::move(t));
    }
  for (int l = 1; l < d; ++l) {
    ComplexMatrix g = ComplexMatrix::Zero(d, d);
    const double norm = 1.0 / std::sqrt(static_cast<double>(l) * (l + 1));
    for (int k = 0; k < l; ++k) g(k, k) = norm;
    g(l, l) = -l * norm;
    basis.push_back(std::move(g));
  }
  return basis;
}

struct DensityReconstruction {
  ComplexMatrix rho;
  /// Euclidean norm of W - Tr(rho Delta) over the samples.
  double residual_norm = 0.0;
  double min_eigenvalue = 0.0;
  /// Frobenius distance to the positive semidefinite cone.
  double psd_distance = 0.0;
  int rank = 0;
};

/// Linear least-squares inversion of W_i = Tr(rho Delta_i) over Hermitian,
/// unit-trace rho. Positivity is reported, not enforced.
inline DensityReconstruction reconstruct_density(const std::vector<WignerSample>& samples, SpinDimension dim) {
  const int d = dim.d();
  const int unknowns = d * d - 1;
  const WignerKernel kernel(dim);
  const auto basis = traceless_hermitian_basis(d);
  const Eigen::Index rows = static_cast<Eigen::Index>(samples.size());
  if (rows < unknowns) throw NumericalError("reconstruct_density: grid has fewer samples than unknowns (rank deficient)");
  RealMatrix a(rows, unknowns);
  RealVector b(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& s = samples[static_cast<size_t>(i)];
    const ComplexMatrix k = kernel(s.theta, s.phi);
    for (int c = 0; c < unknowns; ++c) a(i, c) = (basis[static_cast<size_t>(c)].transpose().cwiseProduct(k)).sum().real();
    b(i) = s.w - 1.0 / d;  // Tr(Delta) = 1
  }
  Eigen::ColPivHouseholderQR<RealMatrix> qr(a);
  qr.setThreshold(1e-10);
  DensityReconstruction out;
  out.rank = static_cast<int>(qr.rank());
  if (out.rank < unknowns) {
    throw NumericalError("reconstruct_density: grid is not informationally complete (rank " + std::to_string(out.rank) + " < " +
                         std::to_string(unknowns) + ")");
  }
  const RealVector x = qr.solve(b);
  out.rho = ComplexMatrix::Identity(d, d) / static_cast<double>(d);
  for (int c = 0; c < unknowns; ++c) out.rho += x(c) * basis[static_cast<size_t>(c)];
  out.residual_norm = (a * x - b).norm();
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(out.rho, Eigen::EigenvaluesOnly);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  double neg = 0.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) neg += std::pow(std::min(0.0, es.eigenvalues()(k)), 2);
  out.psd_distance = std::sqrt(neg);
  return out;
}

/// (2j+1)/(4 pi) sum_i w_i W_A(i) W_B(i), which equals Tr(A B) times a
/// convention-dependent constant.
inline double traciality_sum(const ComplexMatrix& a, const ComplexMatrix& b, const PhaseSpaceGrid& grid) {
  const SpinDimension dim(static_cast<int>(a.rows()));
  const WignerKernel kernel(dim);
  double acc = 0.0;
  for (const auto& p : grid.points) {
    const ComplexMatrix k = kernel(p.theta, p.phi);
    const Complex wa = (a.transpose().cwiseProduct(k)).sum();
    const Complex wb = (b.transpose().cwiseProduct(k)).sum();
    acc += p.weight * (wa * wb).real();
  }
  return acc * dim.d() / (4.0 * kPi);
}

/// Constant c in Tr(AB) = c * traciality_sum(A, B), fixed from the d = 2
/// case (A = B = identity, where W = 1 everywhere).
inline double traciality_constant() {
  const SpinDimension dim(2);
  const ComplexMatrix id = identity(2);
  return id.trace().real() / traciality_sum(id, id, PhaseSpaceGrid::for_dimension(dim));
}

}  // namespace quditkit
