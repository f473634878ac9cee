#pragma once

#include "quditkit/core.hpp"

#include <algorithm>
#include <cstdlib>
#include <utility>

namespace quditkit {

/// A half-integer held as the integer 2x.
struct HalfInteger {
  int twice = 0;

  static HalfInteger from_twice(int t) { return HalfInteger{t}; }
  static HalfInteger from_double(double x) {
    const double t = 2.0 * x;
    const double r = std::round(t);
    if (std::abs(t - r) > 1e-9 || std::abs(r) > 1e6) {
      throw std::invalid_argument("not a half-integer: " + std::to_string(x));
    }
    return HalfInteger{static_cast<int>(r)};
  }
  double value() const { return 0.5 * twice; }
  bool is_integer() const { return twice % 2 == 0; }

  friend bool operator==(HalfInteger a, HalfInteger b) { return a.twice == b.twice; }
  friend HalfInteger operator+(HalfInteger a, HalfInteger b) { return {a.twice + b.twice}; }
  friend HalfInteger operator-(HalfInteger a, HalfInteger b) { return {a.twice - b.twice}; }
};

/// Spin-j angular momentum matrices in transmon ordering.
///
/// Row/column n holds the spin state |j, j - n>, so jz = diag(j, j-1, ..., -j)
/// and jplus lowers the transmon excitation number.
struct AngularMomentumSet {
  SpinDimension dim;
  ComplexMatrix jx, jy, jz, jplus, jminus;
};

inline AngularMomentumSet build_angular_momentum(SpinDimension dim) {
  const int d = dim.d();
  ComplexMatrix jp = ComplexMatrix::Zero(d, d);
  for (int n = 1; n < d; ++n) jp(n - 1, n) = std::sqrt(static_cast<double>(n) * (d - n));
  ComplexMatrix jm = jp.adjoint();
  ComplexMatrix jz = ComplexMatrix::Zero(d, d);
  for (int n = 0; n < d; ++n) jz(n, n) = dim.j() - n;
  ComplexMatrix jx = 0.5 * (jp + jm);
  ComplexMatrix jy = (jp - jm) / Complex(0.0, 2.0);
  return AngularMomentumSet{dim, std::move(jx), std::move(jy), std::move(jz), std::move(jp), std::move(jm)};
}

// ---------------------------------------------------------------------------
// Clebsch-Gordan coefficients

namespace detail {

inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

inline void check_projection(HalfInteger j, HalfInteger m, const char* what) {
  if (j.twice < 0) throw std::invalid_argument(std::string("negative angular momentum ") + what);
  if (((j.twice - m.twice) % 2) != 0) throw std::invalid_argument(std::string("projection parity does not match ") + what);
  if (std::abs(m.twice) > j.twice) throw std::invalid_argument(std::string("|m| exceeds j for ") + what);
}

}  // namespace detail

/// <j1 m1; j2 m2 | J M> in the Condon-Shortley phase convention.
///
/// Evaluated with the Racah single-sum formula accumulated in log-factorials;
/// exact to double rounding for j up to ~20. Returns 0 when the coupling is
/// forbidden (M != m1 + m2 or J violating the triangle rule).
inline double clebsch_gordan(HalfInteger j1, HalfInteger m1, HalfInteger j2, HalfInteger m2, HalfInteger J, HalfInteger M) {
  detail::check_projection(j1, m1, "j1");
  detail::check_projection(j2, m2, "j2");
  detail::check_projection(J, M, "J");
  if (j1.twice > 80 || j2.twice > 80 || J.twice > 160) throw std::invalid_argument("clebsch_gordan: j too large (limit 40)");
  if (M.twice != m1.twice + m2.twice) return 0.0;
  if (J.twice > j1.twice + j2.twice || J.twice < std::abs(j1.twice - j2.twice)) return 0.0;
  if ((j1.twice + j2.twice + J.twice) % 2 != 0) return 0.0;

  // All of these are integers once the triangle and parity checks pass.
  const int a = (j1.twice + j2.twice - J.twice) / 2;  // j1 + j2 - J
  const int b = (j1.twice - m1.twice) / 2;            // j1 - m1
  const int c = (j2.twice + m2.twice) / 2;            // j2 + m2
  const int e = (J.twice - j2.twice + m1.twice) / 2;  // J - j2 + m1
  const int f = (J.twice - j1.twice - m2.twice) / 2;  // J - j1 - m2

  using detail::log_factorial;
  const double log_pre =
      0.5 * (std::log(J.twice + 1.0) + log_factorial((J.twice + j1.twice - j2.twice) / 2) +
             log_factorial((J.twice - j1.twice + j2.twice) / 2) + log_factorial(a) -
             log_factorial((j1.twice + j2.twice + J.twice) / 2 + 1) + log_factorial((J.twice + M.twice) / 2) +
             log_factorial((J.twice - M.twice) / 2) + log_factorial(b) + log_factorial((j1.twice + m1.twice) / 2) +
             log_factorial((j2.twice - m2.twice) / 2) + log_factorial(c));

  const int k_min = std::max({0, -e, -f});
  const int k_max = std::min({a, b, c});
  double sum = 0.0;
  for (int k = k_min; k <= k_max; ++k) {
    const double log_den = log_factorial(k) + log_factorial(a - k) + log_factorial(b - k) + log_factorial(c - k) +
                           log_factorial(e + k) + log_factorial(f + k);
    const double term = std::exp(log_pre - log_den);
    sum += (k % 2 == 0) ? term : -term;
  }
  return sum;
}

inline double clebsch_gordan(double j1, double m1, double j2, double m2, double J, double M) {
  return clebsch_gordan(HalfInteger::from_double(j1), HalfInteger::from_double(m1), HalfInteger::from_double(j2),
                        HalfInteger::from_double(m2), HalfInteger::from_double(J), HalfInteger::from_double(M));
}

// ---------------------------------------------------------------------------
// Spin <-> transmon labels: |j, m> is stored at transmon index n = j - m.

inline int spin_to_transmon_index(HalfInteger j, HalfInteger m) {
  detail::check_projection(j, m, "spin_to_transmon_index");
  return (j.twice - m.twice) / 2;
}

inline int spin_to_transmon_index(double j, double m) {
  return spin_to_transmon_index(HalfInteger::from_double(j), HalfInteger::from_double(m));
}

inline std::pair<HalfInteger, HalfInteger> transmon_to_spin_index(SpinDimension dim, int n) {
  if (n < 0 || n >= dim.d()) throw std::out_of_range("transmon index out of range");
  const HalfInteger j{dim.twice_j()};
  return {j, HalfInteger{j.twice - 2 * n}};
}

}  // namespace quditkit
