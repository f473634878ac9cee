#pragma once

#include "quditkit/core.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <vector>

namespace quditkit {

/// Charge-basis transmon H = 4 E_C (n - n_g)^2 - E_J cos(phi). Energies in GHz.
struct TransmonSpec {
  double ej = 29.09;
  double ec = 0.108;
  double ng = 0.0;
  int charge_cutoff = 40;

  void validate() const {
    if (!(ej > 0.0) || !(ec > 0.0)) throw ConfigError("transmon: ej and ec must be positive");
    if (!std::isfinite(ng)) throw ConfigError("transmon: ng must be finite");
    if (charge_cutoff < 1) throw ConfigError("transmon: charge_cutoff must be >= 1");
  }
  double ratio() const { return ej / ec; }
};

struct TransmonEigenSystem {
  /// Level energies relative to the ground state, GHz, ascending.
  RealVector energies;
  /// <i|n|j> between the kept eigenstates. Eigenvector signs are chosen so
  /// that every <k|n|k+1> is non-negative.
  ComplexMatrix charge_matrix;
  int dim_kept = 0;

  double transition(int k) const { return energies(k + 1) - energies(k); }
};

namespace detail {

inline RealMatrix transmon_hamiltonian(const TransmonSpec& spec, int cutoff) {
  const int size = 2 * cutoff + 1;
  RealMatrix h = RealMatrix::Zero(size, size);
  for (int i = 0; i < size; ++i) {
    const double n = i - cutoff - spec.ng;
    h(i, i) = 4.0 * spec.ec * n * n;
    if (i + 1 < size) h(i, i + 1) = h(i + 1, i) = -0.5 * spec.ej;
  }
  return h;
}

inline RealVector lowest_energies(const TransmonSpec& spec, int cutoff, int levels) {
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(transmon_hamiltonian(spec, cutoff), Eigen::EigenvaluesOnly);
  return es.eigenvalues().head(levels);
}

}  // namespace detail

/// Diagonalises the charge-basis Hamiltonian and keeps the lowest `levels`
/// states. Throws NumericalError if the highest kept level moves by more
/// than 1e-9 GHz when the charge cutoff grows by 5.
inline TransmonEigenSystem diagonalize(const TransmonSpec& spec, int levels) {
  spec.validate();
  const int size = 2 * spec.charge_cutoff + 1;
  if (levels < 1 || levels > size) throw std::invalid_argument("diagonalize: levels must be in [1, 2*cutoff+1]");
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(detail::transmon_hamiltonian(spec, spec.charge_cutoff));
  if (es.info() != Eigen::Success) throw NumericalError("diagonalize: eigensolver failed");
  const RealVector wider = detail::lowest_energies(spec, spec.charge_cutoff + 5, levels);
  if (std::abs(wider(levels - 1) - es.eigenvalues()(levels - 1)) > 1e-9) {
    throw NumericalError("diagonalize: charge cutoff " + std::to_string(spec.charge_cutoff) + " not converged for " +
                         std::to_string(levels) + " levels");
  }
  RealMatrix vecs = es.eigenvectors().leftCols(levels);
  RealVector charge(size);
  for (int i = 0; i < size; ++i) charge(i) = i - spec.charge_cutoff - spec.ng;
  for (int k = 0; k + 1 < levels; ++k) {
    const double element = vecs.col(k).dot(charge.asDiagonal() * vecs.col(k + 1));
    if (element < 0.0) vecs.col(k + 1) *= -1.0;
  }
  TransmonEigenSystem sys;
  sys.dim_kept = levels;
  sys.energies = es.eigenvalues().head(levels).array() - es.eigenvalues()(0);
  sys.charge_matrix = (vecs.transpose() * charge.asDiagonal() * vecs).cast<Complex>();
  return sys;
}

inline std::vector<double> transition_frequencies(const TransmonSpec& spec, int count) {
  const auto sys = diagonalize(spec, count + 1);
  std::vector<double> f;
  for (int k = 0; k < count; ++k) f.push_back(sys.transition(k));
  return f;
}

/// Rough number of levels held by the cosine well, sqrt(E_J / (2 E_C)).
inline double confined_levels(const TransmonSpec& spec) {
  spec.validate();
  return std::sqrt(spec.ej / (2.0 * spec.ec));
}

/// Asymptotic charge dispersion of level n (GHz),
///   (-1)^n E_C 2^{4n+5}/n! sqrt(2/pi) (E_J/2E_C)^{n/2+3/4} exp(-sqrt(8 E_J/E_C)).
inline double charge_dispersion(const TransmonSpec& spec, int n) {
  spec.validate();
  if (n < 0) throw std::invalid_argument("charge_dispersion: level must be >= 0");
  const double r = spec.ej / spec.ec;
  const double log_mag = std::log(spec.ec) + (4.0 * n + 5.0) * std::log(2.0) - std::lgamma(n + 1.0) + 0.5 * std::log(2.0 / kPi) +
                         (0.5 * n + 0.75) * std::log(r / 2.0) - std::sqrt(8.0 * r);
  return (n % 2 == 0 ? 1.0 : -1.0) * std::exp(log_mag);
}

/// E_n(n_g = 1/2) - E_n(n_g = 0) from the charge-basis Hamiltonian, with the
/// eigenvalues located by Sturm-sequence bisection in 50-digit arithmetic.
/// Deep-well dispersions (1e-18 GHz and below) are far under double rounding
/// of the ~10 GHz level energies, hence the extended precision.
inline double charge_dispersion_numeric(const TransmonSpec& spec, int n) {
  spec.validate();
  using Real = boost::multiprecision::cpp_bin_float_50;
  const int size = 2 * spec.charge_cutoff + 1;
  if (n < 0 || n >= size) throw std::invalid_argument("charge_dispersion_numeric: level out of range");
  auto eigenvalue = [&](const Real& ng) {
    std::vector<Real> diag(static_cast<size_t>(size));
    const Real ec = spec.ec;
    for (int i = 0; i < size; ++i) {
      const Real q = Real(i - spec.charge_cutoff) - ng;
      diag[static_cast<size_t>(i)] = 4 * ec * q * q;
    }
    const Real off2 = Real(spec.ej) * Real(spec.ej) / 4;
    // number of eigenvalues strictly below x
    auto count_below = [&](const Real& x) {
      int count = 0;
      Real q = diag[0] - x;
      if (q < 0) ++count;
      for (int i = 1; i < size; ++i) {
        if (q == 0) q = Real(1e-60);
        q = diag[static_cast<size_t>(i)] - x - off2 / q;
        if (q < 0) ++count;
      }
      return count;
    };
    Real lo = -Real(spec.ej) - 1, hi = diag[0];
    for (const Real& v : diag) hi = std::max(hi, v);
    hi += Real(spec.ej) + 1;
    for (int it = 0; it < 400 && hi - lo > Real(1e-45); ++it) {
      const Real mid = (lo + hi) / 2;
      if (count_below(mid) > n) hi = mid;
      else lo = mid;
    }
    return (lo + hi) / 2;
  };
  const Real diff = eigenvalue(Real(1) / 2) - eigenvalue(Real(0));
  return static_cast<double>(diff);
}

struct TransmonFit {
  double ej = 0.0;
  double ec = 0.0;
  std::vector<double> fitted;
  std::vector<double> residuals;
  double max_abs_residual = 0.0;
};

/// Least-squares (E_J, E_C) reproducing the ladder f_{01}, f_{12}, ...
/// (Levenberg-Marquardt on GHz residuals).
inline TransmonFit fit_transmon(const std::vector<double>& frequencies, double ng = 0.0, int charge_cutoff = 40) {
  if (frequencies.size() < 2) throw ConfigError("fit_transmon: need at least two transition frequencies");
  const int m = static_cast<int>(frequencies.size());

  struct Residual {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    const std::vector<double>* target;
    double ng;
    int cutoff;
    int inputs() const { return 2; }
    int values() const { return static_cast<int>(target->size()); }
    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
      TransmonSpec s{std::abs(x(0)), std::abs(x(1)), ng, cutoff};
      const RealVector e = detail::lowest_energies(s, cutoff, values() + 1);
      for (int k = 0; k < values(); ++k) f(k) = (e(k + 1) - e(k)) - (*target)[static_cast<size_t>(k)];
      return 0;
    }
  };

  // harmonic-limit starting point: f01 = sqrt(8 E_J E_C) - E_C, anharmonicity -E_C
  const double ec0 = std::max(1e-3, frequencies[0] - frequencies[1]);
  const double ej0 = std::pow(frequencies[0] + ec0, 2) / (8.0 * ec0);
  Eigen::VectorXd x(2);
  x << ej0, ec0;
  Residual functor{&frequencies, ng, charge_cutoff};
  Eigen::NumericalDiff<Residual> numeric(functor);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Residual>> lm(numeric);
  lm.parameters.xtol = 1e-14;
  lm.parameters.ftol = 1e-14;
  lm.parameters.maxfev = 2000;
  lm.minimize(x);

  TransmonFit fit;
  fit.ej = std::abs(x(0));
  fit.ec = std::abs(x(1));
  Eigen::VectorXd r(m);
  functor(x, r);
  for (int k = 0; k < m; ++k) {
    fit.residuals.push_back(r(k));
    fit.fitted.push_back(frequencies[static_cast<size_t>(k)] + r(k));
    fit.max_abs_residual = std::max(fit.max_abs_residual, std::abs(r(k)));
  }
  return fit;
}

/// Reference device: E_J = 29.09 GHz, E_C = 0.108 GHz, n_g = 0.
inline TransmonSpec reference_transmon() { return {}; }

/// Measured transition ladder f_{01} ... f_{67} of the reference device, GHz.
inline const std::vector<double>& reference_transition_frequencies() {
  static const std::vector<double> f{4.896, 4.782, 4.664, 4.539, 4.407, 4.267, 4.116};
  return f;
}

}  // namespace quditkit
