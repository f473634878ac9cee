#pragma once

#include "quditkit/core.hpp"
#include "quditkit/gates.hpp"
#include "quditkit/optimize.hpp"
#include "quditkit/parallel.hpp"
#include "quditkit/spin_algebra.hpp"

#include <optional>
#include <string>
#include <vector>

namespace quditkit {

enum class SynthesisMode { general, pi_half_canonical };

inline std::string to_string(SynthesisMode m) { return m == SynthesisMode::general ? "general" : "pi_half_canonical"; }

inline SynthesisMode synthesis_mode_from_string(const std::string& s) {
  if (s == "general") return SynthesisMode::general;
  if (s == "pi_half_canonical") return SynthesisMode::pi_half_canonical;
  throw ConfigError("unknown synthesis mode '" + s + "'");
}

/// U = S(snaps[N]) D(thetas[N-1]) ... S(snaps[1]) D(thetas[0]) S(snaps[0]).
///
/// Displacements carry zero phase; their phase is absorbed into the SNAP
/// layers. In pi_half_canonical mode every theta equals pi/2.
struct SnapDisplacementProgram {
  SpinDimension dim{2};
  SynthesisMode mode = SynthesisMode::general;
  std::vector<double> thetas;
  std::vector<SnapPhases> snaps;

  int depth() const { return static_cast<int>(thetas.size()); }

  static SnapDisplacementProgram identity(SpinDimension dim, int depth = 0, SynthesisMode mode = SynthesisMode::general) {
    SnapDisplacementProgram p;
    p.dim = dim;
    p.mode = mode;
    p.thetas.assign(static_cast<size_t>(depth), mode == SynthesisMode::pi_half_canonical ? kPi / 2 : 0.0);
    p.snaps.assign(static_cast<size_t>(depth + 1), SnapPhases::zeros(dim.d()));
    return p;
  }

  void validate() const {
    if (snaps.size() != thetas.size() + 1) throw std::invalid_argument("program needs exactly one more SNAP layer than displacements");
    for (const auto& s : snaps) {
      if (s.size() != dim.d()) throw std::invalid_argument("SNAP layer dimension does not match program dimension");
    }
    if (mode == SynthesisMode::pi_half_canonical) {
      for (double t : thetas) {
        if (std::abs(t - kPi / 2) > 1e-12) throw std::invalid_argument("pi_half_canonical program with theta != pi/2");
      }
    }
  }

  /// Number of physical displacement pulses.
  int pulse_count() const {
    int n = 0;
    for (double t : thetas) n += (t != 0.0);
    return n;
  }
};

inline ComplexMatrix reconstruct(const SnapDisplacementProgram& program) {
  program.validate();
  const YRotation rot(program.dim);
  ComplexMatrix u = snap(program.dim, program.snaps[0]);
  for (int k = 0; k < program.depth(); ++k) {
    u = snap(program.dim, program.snaps[static_cast<size_t>(k + 1)]) * (rot(program.thetas[static_cast<size_t>(k)]) * u);
  }
  return u;
}

inline int parameter_count(int d, int depth, SynthesisMode mode) {
  if (d < 2 || depth < 0) throw std::invalid_argument("parameter_count: need d >= 2 and depth >= 0");
  const int snap_params = (depth + 1) * (d - 1);
  return mode == SynthesisMode::general ? depth + snap_params : snap_params;
}

/// Smallest depth whose parameter count reaches d^2 - 1.
inline int minimal_depth(int d) {
  if (d < 2) throw std::invalid_argument("minimal_depth: need d >= 2");
  return d - 1;
}

/// Q_n = sum_{q<=n} |q><q|, the level-n cumulative projector.
inline ComplexMatrix cumulative_projector(SpinDimension dim, int n) {
  if (n < 0 || n >= dim.d()) throw std::out_of_range("cumulative_projector: level out of range");
  ComplexMatrix q = ComplexMatrix::Zero(dim.d(), dim.d());
  for (int k = 0; k <= n; ++k) q(k, k) = 1.0;
  return q;
}

/// i[Jy, Q_n]: couples only levels n and n+1. With the ladder convention used
/// here the coupling is -(1/2) sqrt((n+1)(d-n-1)).
inline ComplexMatrix jy_projector_commutator(SpinDimension dim, int n) {
  const AngularMomentumSet ops = build_angular_momentum(dim);
  return kI * commutator(ops.jy, cumulative_projector(dim, n));
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
/// of R's diagonal moved into Q.
inline ComplexMatrix haar_random_unitary(int d, std::uint64_t seed) {
  if (d < 2) throw std::invalid_argument("haar_random_unitary: need d >= 2");
  Rng rng(seed);
  ComplexMatrix z(d, d);
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < d; ++r) z(r, c) = rng.complex_normal() / std::sqrt(2.0);
  Eigen::HouseholderQR<ComplexMatrix> qr(z);
  ComplexMatrix q = qr.householderQ();
  const ComplexMatrix& rr = qr.matrixQR();
  for (int k = 0; k < d; ++k) {
    const Complex rkk = rr(k, k);
    q.col(k) *= (std::abs(rkk) > 0 ? rkk / std::abs(rkk) : Complex(1.0));
  }
  return q;
}

/// Rewrites every general displacement as two pi/2 displacements separated by
/// a Jz rotation:
///   D(theta) = Z(pi/2) D(pi/2) Z(theta - pi) D(pi/2) Z(pi/2)   (global phase aside)
/// with Z(a) = exp(-i a Jz). The outer Z factors merge into neighbouring SNAPs.
inline SnapDisplacementProgram to_pi_half_canonical(const SnapDisplacementProgram& program) {
  program.validate();
  if (program.mode == SynthesisMode::pi_half_canonical) return program;
  const SpinDimension dim = program.dim;
  const SnapPhases quarter = jz_rotation_phases(dim, kPi / 2);
  SnapDisplacementProgram out;
  out.dim = dim;
  out.mode = SynthesisMode::pi_half_canonical;
  SnapPhases pending = program.snaps[0];
  for (int k = 0; k < program.depth(); ++k) {
    out.snaps.push_back(pending + quarter);
    out.thetas.push_back(kPi / 2);
    out.snaps.push_back(jz_rotation_phases(dim, program.thetas[static_cast<size_t>(k)] - kPi));
    out.thetas.push_back(kPi / 2);
    pending = quarter + program.snaps[static_cast<size_t>(k + 1)];
  }
  out.snaps.push_back(pending);
  return out;
}

/// Inverse program: reversed layers, negated SNAPs, and each D(pi/2)^dagger
/// rewritten as exp(-i pi Jz) D(pi/2) exp(+i pi Jz) so it stays a pi/2 pulse.
inline SnapDisplacementProgram inverse_program(const SnapDisplacementProgram& program) {
  program.validate();
  const SpinDimension dim = program.dim;
  const int n = program.depth();
  if (program.mode == SynthesisMode::general) {
    SnapDisplacementProgram out;
    out.dim = dim;
    out.mode = program.mode;
    for (int k = n; k >= 0; --k) out.snaps.push_back(-program.snaps[static_cast<size_t>(k)]);
    for (int k = n - 1; k >= 0; --k) out.thetas.push_back(-program.thetas[static_cast<size_t>(k)]);
    return out;
  }
  const SnapPhases zpi = jz_rotation_phases(dim, kPi);
  const SnapPhases zmpi = jz_rotation_phases(dim, -kPi);
  SnapDisplacementProgram out;
  out.dim = dim;
  out.mode = program.mode;
  SnapPhases pending = -program.snaps[static_cast<size_t>(n)];
  for (int k = n - 1; k >= 0; --k) {
    out.snaps.push_back(pending + zmpi);
    out.thetas.push_back(kPi / 2);
    pending = zpi + (-program.snaps[static_cast<size_t>(k)]);
  }
  out.snaps.push_back(pending);
  return out;
}

/// Fidelity functional |Tr(W U)|^2 / norm^2 maximised by the synthesiser.
///
/// For a full unitary target T, W = T^dagger and norm = d. For a k-dimensional
/// subspace map C between isometries V_in and V_out, W = V_in C^dagger V_out^dagger
/// and norm = k.
struct SynthesisTarget {
  ComplexMatrix weight;
  double norm = 1.0;

  static SynthesisTarget unitary(const ComplexMatrix& target) {
    if (target.rows() != target.cols()) throw std::invalid_argument("target must be square");
    if (!is_unitary(target, 1e-9)) throw std::invalid_argument("decompose: target is not unitary");
    return {target.adjoint(), static_cast<double>(target.rows())};
  }
  static SynthesisTarget subspace(const ComplexMatrix& logical, const ComplexMatrix& v_in, const ComplexMatrix& v_out) {
    if (logical.rows() != v_in.cols() || logical.cols() != v_in.cols() || v_out.cols() != v_in.cols() || v_in.rows() != v_out.rows()) {
      throw std::invalid_argument("subspace target shape mismatch");
    }
    if (!is_unitary(logical, 1e-9)) throw std::invalid_argument("subspace target is not unitary");
    return {v_in * logical.adjoint() * v_out.adjoint(), static_cast<double>(logical.rows())};
  }
  static SynthesisTarget state(const ComplexVector& from, const ComplexVector& to) {
    return {from * to.adjoint(), 1.0};
  }

  double fidelity(const ComplexMatrix& u) const { return std::norm((weight * u).trace()) / (norm * norm); }
};

/// Infidelity and analytic gradient of a program with respect to its free
/// parameters. Layout: [thetas (general mode only), then d-1 phases for each
/// SNAP layer, level 0 pinned to zero].
class ProgramObjective {
 public:
  ProgramObjective(SynthesisTarget target, SpinDimension dim, int depth, SynthesisMode mode)
      : target_(std::move(target)), dim_(dim), depth_(depth), mode_(mode), rot_(dim) {
    if (target_.weight.rows() != dim.d() || target_.weight.cols() != dim.d()) throw std::invalid_argument("target dimension mismatch");
  }

  int size() const { return parameter_count(dim_.d(), depth_, mode_); }

  SnapDisplacementProgram unpack(const RealVector& x) const {
    SnapDisplacementProgram p;
    p.dim = dim_;
    p.mode = mode_;
    const int d = dim_.d();
    int idx = 0;
    for (int k = 0; k < depth_; ++k) p.thetas.push_back(mode_ == SynthesisMode::general ? x(idx++) : kPi / 2);
    for (int k = 0; k <= depth_; ++k) {
      SnapPhases s = SnapPhases::zeros(d);
      for (int n = 1; n < d; ++n) s[n] = x(idx++);
      p.snaps.push_back(std::move(s));
    }
    return p;
  }

  double operator()(const RealVector& x, RealVector& grad) const {
    const int d = dim_.d();
    const int layers = 2 * depth_ + 1;  // factors F_0 .. F_{2N}
    std::vector<ComplexMatrix> factors(static_cast<size_t>(layers));
    std::vector<ComplexVector> snap_diag(static_cast<size_t>(depth_ + 1));
    int idx = 0;
    std::vector<double> thetas(static_cast<size_t>(depth_));
    for (int k = 0; k < depth_; ++k) thetas[static_cast<size_t>(k)] = mode_ == SynthesisMode::general ? x(idx++) : kPi / 2;
    for (int k = 0; k <= depth_; ++k) {
      ComplexVector dg(d);
      dg(0) = 1.0;
      for (int n = 1; n < d; ++n) dg(n) = std::exp(kI * x(idx++));
      snap_diag[static_cast<size_t>(k)] = dg;
    }
    for (int k = 0; k < depth_; ++k) factors[static_cast<size_t>(2 * k + 1)] = rot_(thetas[static_cast<size_t>(k)]);

    // right[i] = F_{i-1} ... F_0, left[i] = F_{2N} ... F_{i+1}
    auto apply_left = [&](int i, const ComplexMatrix& m) -> ComplexMatrix {
      if (i % 2 == 0) return snap_diag[static_cast<size_t>(i / 2)].asDiagonal() * m;
      return factors[static_cast<size_t>(i)] * m;
    };
    auto apply_right = [&](const ComplexMatrix& m, int i) -> ComplexMatrix {
      if (i % 2 == 0) return m * snap_diag[static_cast<size_t>(i / 2)].asDiagonal();
      return m * factors[static_cast<size_t>(i)];
    };
    std::vector<ComplexMatrix> right(static_cast<size_t>(layers)), left(static_cast<size_t>(layers));
    right[0] = ComplexMatrix::Identity(d, d);
    for (int i = 1; i < layers; ++i) right[static_cast<size_t>(i)] = apply_left(i - 1, right[static_cast<size_t>(i - 1)]);
    left[static_cast<size_t>(layers - 1)] = ComplexMatrix::Identity(d, d);
    for (int i = layers - 2; i >= 0; --i) left[static_cast<size_t>(i)] = apply_right(left[static_cast<size_t>(i + 1)], i + 1);

    const ComplexMatrix full = apply_left(layers - 1, right[static_cast<size_t>(layers - 1)]);
    const Complex tr = (target_.weight * full).trace();
    const double scale = 1.0 / (target_.norm * target_.norm);
    const double fid = std::norm(tr) * scale;

    grad.resize(size());
    idx = 0;
    // d Tr(W L F R) = Tr((R W L) dF)
    if (mode_ == SynthesisMode::general) {
      for (int k = 0; k < depth_; ++k) {
        const int i = 2 * k + 1;
        const ComplexMatrix rw = right[static_cast<size_t>(i)] * target_.weight;
        const ComplexMatrix ljd = left[static_cast<size_t>(i)] * (rot_.jy() * factors[static_cast<size_t>(i)]);
        const Complex dtr = -kI * (rw.transpose().cwiseProduct(ljd)).sum();
        grad(idx++) = -2.0 * scale * (std::conj(tr) * dtr).real();
      }
    }
    for (int k = 0; k <= depth_; ++k) {
      const int i = 2 * k;
      const ComplexMatrix rw = right[static_cast<size_t>(i)] * target_.weight;
      const ComplexMatrix& l = left[static_cast<size_t>(i)];
      const ComplexVector& dg = snap_diag[static_cast<size_t>(k)];
      for (int n = 1; n < d; ++n) {
        const Complex q = (rw.row(n).transpose().cwiseProduct(l.col(n))).sum();  // (R W L)_{nn}
        const Complex dtr = kI * dg(n) * q;
        grad(idx++) = -2.0 * scale * (std::conj(tr) * dtr).real();
      }
    }
    return 1.0 - fid;
  }

 private:
  SynthesisTarget target_;
  SpinDimension dim_;
  int depth_;
  SynthesisMode mode_;
  YRotation rot_;
};

struct DecomposeOptions {
  int restarts = 20;
  std::uint64_t seed = 0;
  int max_iterations = 5000;
  /// Infidelity at which a restart counts as converged.
  double threshold = 1e-10;
  /// Skip the remaining restarts once one reaches the threshold.
  bool stop_at_threshold = true;
  int threads = 1;
};

struct DecomposeResult {
  SnapDisplacementProgram program;
  double infidelity = 1.0;
  int best_restart = -1;
  std::vector<double> restart_infidelities;
};

namespace detail {

struct RestartOutcome {
  RealVector x;
  double infidelity = 1.0;
  double norm = 0.0;
};

// Lowest infidelity, then smallest parameter norm, then lowest index.
inline bool better(const RestartOutcome& a, int ia, const RestartOutcome& b, int ib) {
  if (a.infidelity != b.infidelity) return a.infidelity < b.infidelity;
  if (a.norm != b.norm) return a.norm < b.norm;
  return ia < ib;
}

}  // namespace detail

inline DecomposeResult synthesize(const SynthesisTarget& target, SpinDimension dim, int depth, SynthesisMode mode,
                                  const DecomposeOptions& options = {}) {
  if (depth < 0) throw std::invalid_argument("decompose: depth must be >= 0");
  if (options.restarts < 1) throw std::invalid_argument("decompose: need at least one restart");
  const ProgramObjective objective(target, dim, depth, mode);
  const int n = objective.size();
  const Rng root(options.seed);
  Objective f = [&objective](const RealVector& x, RealVector& g) { return objective(x, g); };
  MinimizeOptions mo;
  mo.max_iterations = options.max_iterations;
  mo.target_value = options.threshold;
  mo.gradient_tolerance = 1e-12;
  mo.function_tolerance = 1e-14;
  mo.stall_iterations = 50;

  std::vector<detail::RestartOutcome> outcomes(static_cast<size_t>(options.restarts));
  auto run_one = [&](int r) {
    Rng rng = root.split(static_cast<std::uint64_t>(r));
    RealVector x0(n);
    int idx = 0;
    if (mode == SynthesisMode::general)
      for (int k = 0; k < depth; ++k) x0(idx++) = rng.uniform(0.0, kPi);
    for (; idx < n; ++idx) x0(idx) = rng.uniform(0.0, kTwoPi);
    MinimizeResult mr = minimize_bfgs(f, x0, mo);
    auto& out = outcomes[static_cast<size_t>(r)];
    out.infidelity = std::max(0.0, mr.value);
    out.norm = mr.x.norm();
    out.x = std::move(mr.x);
  };

  const int threads = std::max(1, options.threads);
  int evaluated = 0;
  int stop_index = options.restarts;  // first restart reaching the threshold
  while (evaluated < options.restarts && stop_index == options.restarts) {
    const int batch = options.stop_at_threshold ? std::min(threads, options.restarts - evaluated) : options.restarts;
    parallel_for(batch, threads, [&](int i) { run_one(evaluated + i); });
    for (int i = evaluated; i < evaluated + batch; ++i) {
      if (options.stop_at_threshold && outcomes[static_cast<size_t>(i)].infidelity <= options.threshold) {
        stop_index = i;
        break;
      }
    }
    evaluated += batch;
  }
  const int considered = std::min(stop_index + 1, options.restarts);
  DecomposeResult res;
  int best = 0;
  for (int r = 0; r < considered; ++r) {
    res.restart_infidelities.push_back(outcomes[static_cast<size_t>(r)].infidelity);
    if (r > 0 && detail::better(outcomes[static_cast<size_t>(r)], r, outcomes[static_cast<size_t>(best)], best)) best = r;
  }
  res.best_restart = best;
  res.program = objective.unpack(outcomes[static_cast<size_t>(best)].x);
  res.infidelity = 1.0 - target.fidelity(reconstruct(res.program));
  res.infidelity = std::max(0.0, res.infidelity);
  return res;
}

/// Best SNAP-displacement program of the given depth for a unitary target.
inline DecomposeResult decompose(const ComplexMatrix& target, int depth, SynthesisMode mode, const DecomposeOptions& options = {}) {
  const SynthesisTarget t = SynthesisTarget::unitary(target);
  return synthesize(t, SpinDimension(static_cast<int>(target.rows())), depth, mode, options);
}

}  // namespace quditkit
