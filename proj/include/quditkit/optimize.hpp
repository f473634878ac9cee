#pragma once

#include "quditkit/core.hpp"

#include <functional>
#include <limits>
#include <string>

namespace quditkit {

struct MinimizeOptions {
  int max_iterations = 5000;
  /// Stop when the infinity norm of the gradient falls below this.
  double gradient_tolerance = 1e-10;
  /// Stop as soon as the objective reaches this value.
  double target_value = -std::numeric_limits<double>::infinity();
  /// Stop after this many consecutive iterations whose relative decrease is
  /// below `function_tolerance`.
  double function_tolerance = 0.0;
  int stall_iterations = 10;
  /// Objective evaluations allowed, counting line-search trials.
  int max_evaluations = std::numeric_limits<int>::max();
};

struct MinimizeResult {
  RealVector x;
  double value = std::numeric_limits<double>::infinity();
  RealVector gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string reason;

  double gradient_norm() const { return gradient.size() ? gradient.lpNorm<Eigen::Infinity>() : 0.0; }
};

/// f(x, grad) -> value; must fill grad.
using Objective = std::function<double(const RealVector&, RealVector&)>;

namespace detail {

struct LinePoint {
  double alpha = 0.0;
  double value = 0.0;
  double slope = 0.0;
  RealVector x;
  RealVector grad;
};

// Minimiser of the cubic through (a, fa, da) and (b, fb, db), safeguarded to
// the interior of [a, b].
inline double cubic_step(double a, double fa, double da, double b, double fb, double db) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  double t = 0.5 * (a + b);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = db - da + 2.0 * d2;
    if (std::abs(denom) > 0.0) t = b - (b - a) * (db + d2 - d1) / denom;
  }
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (a + b);
  return t;
}

// Strong-Wolfe line search (Nocedal & Wright, algorithms 3.5 and 3.6).
inline bool wolfe_search(const Objective& f, const RealVector& x, double f0, const RealVector& g0, const RealVector& dir,
                         double alpha_init, LinePoint& out, int& evaluations) {
  constexpr double c1 = 1e-4, c2 = 0.9;
  const double slope0 = g0.dot(dir);
  auto eval = [&](double a) {
    LinePoint p;
    p.alpha = a;
    p.x = x + a * dir;
    p.grad.resize(x.size());
    p.value = f(p.x, p.grad);
    p.slope = p.grad.dot(dir);
    ++evaluations;
    return p;
  };
  auto armijo = [&](const LinePoint& p) { return p.value <= f0 + c1 * p.alpha * slope0; };
  auto curvature = [&](const LinePoint& p) { return std::abs(p.slope) <= -c2 * slope0; };

  LinePoint best;
  best.alpha = 0.0;
  best.value = f0;
  bool have_best = false;
  auto remember = [&](const LinePoint& p) {
    if (std::isfinite(p.value) && armijo(p) && (!have_best || p.value < best.value)) {
      best = p;
      have_best = true;
    }
  };

  auto zoom = [&](LinePoint lo, LinePoint hi) -> bool {
    for (int it = 0; it < 40; ++it) {
      const double a = cubic_step(lo.alpha, lo.value, lo.slope, hi.alpha, hi.value, hi.slope);
      LinePoint p = eval(a);
      remember(p);
      if (!std::isfinite(p.value) || !armijo(p) || p.value >= lo.value) {
        hi = p;
      } else {
        if (curvature(p)) {
          out = p;
          return true;
        }
        if (p.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = p;
      }
      if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
    }
    if (have_best) {
      out = best;
      return true;
    }
    return false;
  };

  LinePoint prev;
  prev.alpha = 0.0;
  prev.value = f0;
  prev.slope = slope0;
  double a = alpha_init;
  for (int it = 0; it < 30; ++it) {
    LinePoint p = eval(a);
    remember(p);
    if (!std::isfinite(p.value) || !armijo(p) || (it > 0 && p.value >= prev.value)) return zoom(prev, p);
    if (curvature(p)) {
      out = p;
      return true;
    }
    if (p.slope >= 0.0) return zoom(p, prev);
    prev = p;
    a *= 2.0;
  }
  if (have_best) {
    out = best;
    return true;
  }
  return false;
}

}  // namespace detail

/// Dense BFGS with a strong-Wolfe line search.
inline MinimizeResult minimize_bfgs(const Objective& f, RealVector x0, const MinimizeOptions& opt = {}) {
  const Eigen::Index n = x0.size();
  MinimizeResult res;
  res.x = std::move(x0);
  res.gradient.resize(n);
  res.value = f(res.x, res.gradient);
  res.evaluations = 1;
  if (!std::isfinite(res.value) || !res.gradient.allFinite()) throw NumericalError("minimize_bfgs: objective is not finite at the start point");
  if (n == 0) {
    res.converged = true;
    res.reason = "no parameters";
    return res;
  }

  RealMatrix h = RealMatrix::Identity(n, n);
  bool h_is_identity = true;
  int stalled = 0;
  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    if (res.value <= opt.target_value) {
      res.converged = true;
      res.reason = "target reached";
      return res;
    }
    if (res.gradient_norm() < opt.gradient_tolerance) {
      res.converged = true;
      res.reason = "gradient tolerance";
      return res;
    }
    if (res.evaluations >= opt.max_evaluations) {
      res.reason = "evaluation limit";
      return res;
    }
    RealVector dir = -h * res.gradient;
    if (dir.dot(res.gradient) >= 0.0) {
      h.setIdentity();
      h_is_identity = true;
      dir = -res.gradient;
    }
    const double alpha0 = h_is_identity ? std::min(1.0, 1.0 / std::max(1e-300, res.gradient.norm())) : 1.0;
    detail::LinePoint next;
    if (!detail::wolfe_search(f, res.x, res.value, res.gradient, dir, alpha0, next, res.evaluations)) {
      if (!h_is_identity) {
        h.setIdentity();
        h_is_identity = true;
        continue;
      }
      res.reason = "line search failed";
      return res;
    }
    const RealVector s = next.x - res.x;
    const RealVector y = next.grad - res.gradient;
    const double decrease = res.value - next.value;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      if (h_is_identity) h *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const RealVector hy = h * y;
      const double yhy = y.dot(hy);
      h += ((1.0 + rho * yhy) * rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
      h_is_identity = false;
    }
    res.x = std::move(next.x);
    res.gradient = std::move(next.grad);
    res.value = next.value;
    if (opt.function_tolerance > 0.0) {
      stalled = (decrease <= opt.function_tolerance * std::max(1.0, std::abs(res.value))) ? stalled + 1 : 0;
      if (stalled >= opt.stall_iterations) {
        res.converged = true;
        res.reason = "function tolerance";
        return res;
      }
    }
  }
  res.converged = res.value <= opt.target_value || res.gradient_norm() < opt.gradient_tolerance;
  res.reason = res.converged ? "converged at iteration limit" : "iteration limit";
  return res;
}

}  // namespace quditkit
