#pragma once

#include "quditkit/core.hpp"
#include "quditkit/spin_algebra.hpp"

#include <vector>

namespace quditkit {

/// Rotation parameters of a spin displacement. alpha = -(theta/2) e^{-i phi}.
struct DisplacementParams {
  double theta = 0.0;
  double phi = 0.0;

  /// Angles wrapped into [0, 2pi). For half-integer spin a 2pi shift of theta
  /// flips the sign of the operator, so the canonical form agrees with the
  /// raw one only up to global phase.
  DisplacementParams canonical() const { return {wrap_angle(theta), wrap_angle(phi)}; }
  Complex alpha() const { return -0.5 * theta * std::exp(-kI * phi); }
};

/// Per-level phases of a SNAP gate, S = diag(e^{i phi_n}).
struct SnapPhases {
  std::vector<double> phases;

  SnapPhases() = default;
  explicit SnapPhases(std::vector<double> p) : phases(std::move(p)) {}
  static SnapPhases zeros(int d) { return SnapPhases(std::vector<double>(static_cast<size_t>(d), 0.0)); }

  int size() const { return static_cast<int>(phases.size()); }
  double operator[](int n) const { return phases[static_cast<size_t>(n)]; }
  double& operator[](int n) { return phases[static_cast<size_t>(n)]; }
};

/// exp(alpha J+ - alpha* J-), evaluated through the eigendecomposition of the
/// Hermitian matrix i(alpha J+ - alpha* J-).
///
/// Equal to exp(-i phi Jz) exp(-i theta Jy) exp(+i phi Jz) exactly. The
/// two-factor form without the trailing exp(+i phi Jz) agrees only on the
/// highest-weight state |0>, up to a global phase.
inline ComplexMatrix displacement(SpinDimension dim, double theta, double phi) {
  const AngularMomentumSet ops = build_angular_momentum(dim);
  const Complex alpha = -0.5 * theta * std::exp(-kI * phi);
  const ComplexMatrix generator = alpha * ops.jplus - std::conj(alpha) * ops.jminus;
  return expm_hermitian(kI * generator);
}

inline ComplexMatrix displacement(SpinDimension dim, const DisplacementParams& p) { return displacement(dim, p.theta, p.phi); }

/// exp(-i phi Jz) exp(-i theta Jy), the Euler-angle form with psi = 0.
inline ComplexMatrix displacement_euler(SpinDimension dim, double theta, double phi) {
  const AngularMomentumSet ops = build_angular_momentum(dim);
  return expm_hermitian(ops.jz, phi) * expm_hermitian(ops.jy, theta);
}

/// exp(-i theta Jy) from a cached eigendecomposition of Jy.
class YRotation {
 public:
  explicit YRotation(SpinDimension dim) : dim_(dim) {
    const AngularMomentumSet ops = build_angular_momentum(dim);
    jy_ = ops.jy;
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(jy_);
    vecs_ = es.eigenvectors();
    vals_ = es.eigenvalues();
  }

  ComplexMatrix operator()(double theta) const {
    ComplexVector ph(vals_.size());
    for (Eigen::Index k = 0; k < vals_.size(); ++k) ph(k) = std::exp(-kI * (theta * vals_(k)));
    return vecs_ * ph.asDiagonal() * vecs_.adjoint();
  }
  const ComplexMatrix& jy() const { return jy_; }
  SpinDimension dim() const { return dim_; }

 private:
  SpinDimension dim_;
  ComplexMatrix jy_, vecs_;
  RealVector vals_;
};

inline ComplexMatrix snap(SpinDimension dim, const SnapPhases& phases) {
  if (phases.size() != dim.d()) {
    throw std::invalid_argument("snap: expected " + std::to_string(dim.d()) + " phases, got " + std::to_string(phases.size()));
  }
  ComplexVector diag(dim.d());
  for (int n = 0; n < dim.d(); ++n) diag(n) = std::exp(kI * phases[n]);
  return diag.asDiagonal();
}

/// SNAP phases realising exp(-i angle Jz) exactly: phi_n = -angle (j - n).
///
/// This is the single place the virtual-Z convention is defined; every other
/// module builds Jz rotations through it.
inline SnapPhases jz_rotation_phases(SpinDimension dim, double angle) {
  SnapPhases p = SnapPhases::zeros(dim.d());
  for (int n = 0; n < dim.d(); ++n) p[n] = -angle * (dim.j() - n);
  return p;
}

inline SnapPhases operator+(const SnapPhases& a, const SnapPhases& b) {
  if (a.size() != b.size()) throw std::invalid_argument("SnapPhases size mismatch");
  SnapPhases out = a;
  for (int n = 0; n < a.size(); ++n) out[n] += b[n];
  return out;
}

inline SnapPhases operator-(const SnapPhases& a) {
  SnapPhases out = a;
  for (double& x : out.phases) x = -x;
  return out;
}

inline ComplexVector basis_state(int d, int n) {
  ComplexVector v = ComplexVector::Zero(d);
  v(n) = 1.0;
  return v;
}

/// Spin coherent state D(theta, phi)|0>.
inline ComplexVector coherent_state(SpinDimension dim, double theta, double phi) {
  return displacement(dim, theta, phi).col(0);
}

/// Normalised spin cat (|pi/2, 0> + sign |-pi/2, 0>), with |-pi/2, 0> the
/// coherent state displaced by -pi/2 about the same axis.
inline ComplexVector cat_state(SpinDimension dim, int sign = +1) {
  const ComplexVector plus = coherent_state(dim, kPi / 2, 0.0);
  const ComplexVector minus = coherent_state(dim, -kPi / 2, 0.0);
  ComplexVector v = plus + static_cast<double>(sign) * minus;
  const double n = v.norm();
  if (n < 1e-12) throw std::invalid_argument("cat_state: components cancel");
  return v / n;
}

/// Random density matrix G G^dagger / Tr(G G^dagger) with G a d x rank complex
/// Ginibre matrix (rank = d gives the Hilbert-Schmidt ensemble).
inline ComplexMatrix random_density_matrix(int d, int rank, std::uint64_t seed) {
  if (d < 1 || rank < 1) throw std::invalid_argument("random_density_matrix: need d >= 1 and rank >= 1");
  Rng rng(seed);
  ComplexMatrix g(d, rank);
  for (int c = 0; c < rank; ++c)
    for (int r = 0; r < d; ++r) g(r, c) = rng.complex_normal();
  ComplexMatrix rho = g * g.adjoint();
  return rho / rho.trace().real();
}

inline constexpr double kNormalizationTolerance = 1e-9;

inline double expectation_jz(const ComplexVector& psi) {
  const double norm2 = psi.squaredNorm();
  if (std::abs(norm2 - 1.0) > kNormalizationTolerance) throw std::invalid_argument("expectation_jz: state is not normalized");
  const SpinDimension dim(static_cast<int>(psi.size()));
  double acc = 0.0;
  for (int n = 0; n < dim.d(); ++n) acc += std::norm(psi(n)) * (dim.j() - n);
  return acc;
}

inline double expectation_jz(const ComplexMatrix& rho) {
  if (rho.rows() != rho.cols()) throw std::invalid_argument("expectation_jz: density matrix must be square");
  const Complex tr = rho.trace();
  if (std::abs(tr - 1.0) > kNormalizationTolerance) throw std::invalid_argument("expectation_jz: density matrix trace is not 1");
  const SpinDimension dim(static_cast<int>(rho.rows()));
  double acc = 0.0;
  for (int n = 0; n < dim.d(); ++n) acc += rho(n, n).real() * (dim.j() - n);
  return acc;
}

/// (1/d^2) |Tr(u^dagger v)|^2; insensitive to global phase.
inline double unitary_fidelity(const ComplexMatrix& u, const ComplexMatrix& v) {
  if (u.rows() != v.rows() || u.cols() != v.cols() || u.rows() != u.cols()) {
    throw std::invalid_argument("unitary_fidelity: dimension mismatch");
  }
  if (!is_unitary(u, 1e-9) || !is_unitary(v, 1e-9)) throw std::invalid_argument("unitary_fidelity: operand is not unitary");
  const double d = static_cast<double>(u.rows());
  return std::norm((u.adjoint() * v).trace()) / (d * d);
}

inline double state_fidelity(const ComplexVector& a, const ComplexVector& b) { return std::norm(a.dot(b)); }

}  // namespace quditkit
