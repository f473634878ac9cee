#pragma once

#include "quditkit/core.hpp"
#include "quditkit/parallel.hpp"
#include "quditkit/pulse.hpp"

#include <boost/math/tools/roots.hpp>

#include <vector>

namespace quditkit {

/// Inputs of the coherent plus incoherent error model. Frequencies in GHz,
/// durations in ns, Q = T01 f01 dimensionless.
struct BudgetInputs {
  double f01 = 4.896;
  int d = 8;
  double q_factor = 46'000.0 * 4.896;
  double ej_over_ec = 270.0;
  /// Coherent-error coefficient A(d); negative means not calibrated.
  double a_d = -1.0;

  void validate(bool need_a = true) const {
    if (!(f01 > 0.0)) throw ConfigError("budget: f01 must be positive");
    if (d < 2) throw ConfigError("budget: d must be >= 2");
    if (!(q_factor > 0.0)) throw ConfigError("budget: Q must be positive");
    if (!(ej_over_ec > 0.0)) throw ConfigError("budget: ej_over_ec must be positive");
    if (need_a && !(a_d > 0.0)) throw ConfigError("budget: A(d) is missing; run calibrate-budget first");
  }

  /// sqrt(8 E_J / E_C) - 1, i.e. f01 / E_C in the harmonic approximation.
  double frequency_ratio() const { return std::sqrt(8.0 * ej_over_ec) - 1.0; }
};

/// E_inc = f01 d T / (2 Q).
inline double incoherent_error(const BudgetInputs& in, double duration) {
  in.validate(false);
  if (duration < 0.0) throw std::invalid_argument("incoherent_error: duration must be >= 0");
  return in.f01 * in.d * duration / (2.0 * in.q_factor);
}

/// E_coh = (sqrt(8 E_J/E_C) - 1)^2 A / (f01^2 T^2).
inline double coherent_error(const BudgetInputs& in, double duration) {
  in.validate();
  if (!(duration > 0.0)) throw std::invalid_argument("coherent_error: duration must be positive");
  const double k = in.frequency_ratio();
  return k * k * in.a_d / (in.f01 * in.f01 * duration * duration);
}

inline double total_error(const BudgetInputs& in, double duration) { return coherent_error(in, duration) + incoherent_error(in, duration); }

/// T_opt = (1/f01) [4 (sqrt(8 E_J/E_C) - 1)^2 Q A / d]^{1/3}.
inline double optimal_duration(const BudgetInputs& in) {
  in.validate();
  const double k = in.frequency_ratio();
  return std::cbrt(4.0 * k * k * in.q_factor * in.a_d / in.d) / in.f01;
}

/// E_min = (3/2) (A/2)^{1/3} (d/Q)^{2/3} (sqrt(8 E_J/E_C) - 1)^{2/3}.
inline double minimum_infidelity(const BudgetInputs& in) {
  in.validate();
  return 1.5 * std::cbrt(in.a_d / 2.0) * std::pow(in.d / in.q_factor, 2.0 / 3.0) * std::pow(in.frequency_ratio(), 2.0 / 3.0);
}

struct NumericOptimum {
  double duration = 0.0;
  double error = 0.0;
  int iterations = 0;
};

/// Minimises E_coh + E_inc without the closed forms: the stationary point of
/// the summed model is bracketed and located by TOMS 748 on dE/dT.
inline NumericOptimum minimize_total_error(const BudgetInputs& in) {
  in.validate();
  auto slope = [&](double t) { return -2.0 * coherent_error(in, t) / t + in.f01 * in.d / (2.0 * in.q_factor); };
  double lo = 1e-3, hi = 1.0;
  while (slope(hi) < 0.0) hi *= 2.0;
  while (slope(lo) > 0.0) lo /= 2.0;
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(slope, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
  NumericOptimum out;
  out.duration = 0.5 * (r.first + r.second);
  out.error = total_error(in, out.duration);
  out.iterations = static_cast<int>(iters);
  return out;
}

struct BudgetRow {
  double q_factor = 0.0;
  int d = 0;
  double t_opt = 0.0;
  double e_min = 0.0;
};

inline std::vector<BudgetRow> budget_curve(BudgetInputs base, const std::vector<double>& q_values) {
  std::vector<BudgetRow> rows;
  for (double q : q_values) {
    base.q_factor = q;
    rows.push_back({q, base.d, optimal_duration(base), minimum_infidelity(base)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// A(d) from simulated pulses

/// Transmon with E_J/E_C = ratio whose exact f01 equals the requested value.
inline TransmonSpec budget_device(double f01, double ratio = 270.0) {
  if (!(f01 > 0.0) || !(ratio > 0.0)) throw ConfigError("budget_device: f01 and ratio must be positive");
  auto f = [&](double ec) {
    TransmonSpec s;
    s.ec = ec;
    s.ej = ratio * ec;
    return transition_frequencies(s, 1)[0] - f01;
  };
  const double guess = f01 / (std::sqrt(8.0 * ratio) - 1.0);
  std::uintmax_t iters = 100;
  const auto r = boost::math::tools::toms748_solve(f, 0.8 * guess, 1.2 * guess, boost::math::tools::eps_tolerance<double>(50), iters);
  TransmonSpec s;
  s.ec = 0.5 * (r.first + r.second);
  s.ej = ratio * s.ec;
  return s;
}

/// Sweep durations (ns): (6d + 12) x {1, 1.5, ..., 3.5}, long enough that
/// leakage no longer dominates the uncorrected error.
inline std::vector<double> default_calibration_durations(int d) {
  std::vector<double> t;
  for (int i = 0; i < 6; ++i) t.push_back((6.0 * d + 12.0) * (1.0 + 0.5 * i));
  return t;
}

struct CoherentSweepPoint {
  double duration = 0.0;
  double infidelity = 0.0;
  double leakage = 0.0;
};

/// Uncorrected displacement infidelity over pulse durations (unitary model).
inline std::vector<CoherentSweepPoint> coherent_sweep(const TransmonSpec& device, int d, const std::vector<double>& durations, int threads = 1,
                                                      double theta = kPi / 2) {
  std::vector<CoherentSweepPoint> out(durations.size());
  parallel_for(static_cast<int>(durations.size()), threads, [&](int i) {
    PulseProblem p;
    p.device = device;
    p.d = d;
    p.duration = durations[static_cast<size_t>(i)];
    p.theta = theta;
    const PulseModel model(p);
    const auto r = model.run(model.base_drive());
    out[static_cast<size_t>(i)] = {p.duration, 1.0 - gate_fidelity(model.target(), r.frame), r.leakage};
  });
  return out;
}

struct CoherentCalibration {
  int d = 0;
  double f01 = 0.0;         // GHz, of the simulated device
  double ej_over_ec = 0.0;  // of the simulated device
  double a_d = 0.0;
  double coefficient = 0.0;  // fitted c in 1 - F = c / T^2, ns^2
  double r_squared = 0.0;
  std::vector<CoherentSweepPoint> points;
};

/// A = c f01^2 / (sqrt(8 E_J/E_C) - 1)^2 from the least-squares c / T^2 fit.
inline CoherentCalibration calibrate_coherent_coefficient(const TransmonSpec& device, int d, const std::vector<double>& durations, int threads = 1) {
  CoherentCalibration cal;
  cal.d = d;
  cal.f01 = transition_frequencies(device, 1)[0];
  cal.ej_over_ec = device.ratio();
  cal.points = coherent_sweep(device, d, durations, threads);
  std::vector<double> t, e;
  for (const auto& p : cal.points) {
    t.push_back(p.duration);
    e.push_back(p.infidelity);
  }
  const auto fit = fit_inverse_square(t, e);
  cal.coefficient = fit.coefficient;
  cal.r_squared = fit.r_squared;
  const double k = std::sqrt(8.0 * cal.ej_over_ec) - 1.0;
  cal.a_d = fit.coefficient * cal.f01 * cal.f01 / (k * k);
  return cal;
}

}  // namespace quditkit
