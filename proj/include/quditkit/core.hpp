#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace quditkit {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr Complex kI{0.0, 1.0};

// Bad arguments or malformed input documents.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation ran but could not produce a trustworthy result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension of a spin-j qudit, d = 2j + 1.
///
/// The spin is stored as the integer 2j so half-integer spins never go
/// through floating-point comparisons.
class SpinDimension {
 public:
  explicit SpinDimension(int d) : d_(d) {
    if (d < 2) throw std::invalid_argument("qudit dimension must be >= 2, got " + std::to_string(d));
  }
  static SpinDimension from_twice_j(int two_j) { return SpinDimension(two_j + 1); }
  static SpinDimension from_j(double j) {
    const double t = 2.0 * j;
    if (std::abs(t - std::round(t)) > 1e-9 || t < 1.0) throw std::invalid_argument("spin must be a positive half-integer");
    return from_twice_j(static_cast<int>(std::round(t)));
  }

  int d() const { return d_; }
  int twice_j() const { return d_ - 1; }
  double j() const { return 0.5 * (d_ - 1); }

  friend bool operator==(SpinDimension a, SpinDimension b) { return a.d_ == b.d_; }

 private:
  int d_;
};

// ---------------------------------------------------------------------------
// Random numbers
//
// Every stochastic routine takes an explicit 64-bit seed. Streams are
// std::mt19937_64 engines whose seed is passed through SplitMix64; child
// streams are derived by mixing the parent seed with a stream index, so work
// split across any number of workers draws identical numbers.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream; depends only on (seed, index).
  Rng split(std::uint64_t index) const { return Rng(splitmix64(seed_ ^ splitmix64(index + 0x51ed270b27bd1ULL))); }

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double sigma = 1.0) { return std::normal_distribution<double>(mean, sigma)(engine_); }
  Complex complex_normal() {
    const double re = normal();
    return {re, normal()};
  }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Small matrix helpers shared by several modules.

inline ComplexMatrix identity(int d) { return ComplexMatrix::Identity(d, d); }

inline double max_abs(const ComplexMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double unitarity_residual(const ComplexMatrix& u) {
  return max_abs(u.adjoint() * u - ComplexMatrix::Identity(u.cols(), u.cols()));
}

inline bool is_unitary(const ComplexMatrix& u, double tol) { return u.rows() == u.cols() && unitarity_residual(u) <= tol; }

inline ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) { return a * b - b * a; }

/// exp(-i t H) for Hermitian H via eigendecomposition.
inline ComplexMatrix expm_hermitian(const ComplexMatrix& h, double t = 1.0) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
  const RealVector& w = es.eigenvalues();
  ComplexVector phases(w.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) phases(k) = std::exp(-kI * (t * w(k)));
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// Distance between two matrices after removing the relative global phase.
///
/// The phase is the one that best aligns b with a, arg(<b, a>). When the
/// overlap vanishes it falls back to the first element of b with magnitude
/// above 1e-12. The result is zero iff a = e^{i g} b for some real g.
inline double phase_aligned_distance(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("phase_aligned_distance: shape mismatch");
  const Complex overlap = (b.conjugate().cwiseProduct(a)).sum();
  if (std::abs(overlap) > 1e-12 * std::max(1.0, a.norm() * b.norm())) return max_abs(a - (overlap / std::abs(overlap)) * b);
  for (Eigen::Index k = 0; k < b.size(); ++k) {
    const Complex bk = b.data()[k];
    if (std::abs(bk) > 1e-12) {
      const Complex ak = a.data()[k];
      if (std::abs(ak) < 1e-300) return max_abs(a - b);
      const Complex rel = (ak / std::abs(ak)) / (bk / std::abs(bk));
      return max_abs(a - rel * b);
    }
  }
  return max_abs(a);
}

inline bool is_hermitian(const ComplexMatrix& m, double tol) {
  return m.rows() == m.cols() && max_abs(m - m.adjoint()) <= tol;
}

/// Throws std::invalid_argument unless rho is Hermitian, has unit trace and
/// no eigenvalue below -tol.
inline void require_density_matrix(const ComplexMatrix& rho, const char* what, double tol = 1e-9) {
  if (rho.rows() != rho.cols() || rho.rows() == 0) throw std::invalid_argument(std::string(what) + ": density matrix must be square");
  if (!is_hermitian(rho, tol)) throw std::invalid_argument(std::string(what) + ": density matrix is not Hermitian");
  if (std::abs(rho.trace() - 1.0) > tol) throw std::invalid_argument(std::string(what) + ": density matrix trace is not 1");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(rho, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -tol) throw std::invalid_argument(std::string(what) + ": density matrix is not positive semidefinite");
}

/// (1/2) ||a - b||_1 for Hermitian a, b.
inline double trace_distance(const ComplexMatrix& a, const ComplexMatrix& b) {
  const ComplexMatrix diff = a - b;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (diff + diff.adjoint()), Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

inline double wrap_angle(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

}  // namespace quditkit
