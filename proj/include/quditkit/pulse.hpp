#pragma once

#include "quditkit/core.hpp"
#include "quditkit/gates.hpp"
#include "quditkit/optimize.hpp"
#include "quditkit/transmon.hpp"

#include <boost/numeric/odeint.hpp>
#include <boost/numeric/odeint/external/eigen/eigen.hpp>

#include <vector>

namespace quditkit {

/// Flat envelope with cosine ramps on both edges. Omega is in rad/ns.
struct PulseEnvelope {
  double duration = 100.0;      // ns
  double ramp_fraction = 0.25;  // per edge
  double peak = 0.0;            // rad/ns

  /// Envelope whose area equals theta * amplitude_scale.
  static PulseEnvelope for_rotation(double theta, double duration, double ramp_fraction = 0.25, double amplitude_scale = 1.0) {
    PulseEnvelope e{duration, ramp_fraction, 0.0};
    e.validate();
    e.peak = amplitude_scale * theta / (duration * (1.0 - ramp_fraction));
    return e;
  }

  void validate() const {
    if (!(duration > 0.0)) throw ConfigError("pulse duration must be positive");
    if (!(ramp_fraction >= 0.0 && ramp_fraction <= 0.5)) throw ConfigError("ramp_fraction must lie in [0, 0.5]");
  }

  double area() const { return peak * duration * (1.0 - ramp_fraction); }

  double value(double t) const {
    if (t < 0.0 || t > duration) return 0.0;
    const double ramp = ramp_fraction * duration;
    if (ramp > 0.0 && t < ramp) return 0.5 * peak * (1.0 - std::cos(kPi * t / ramp));
    if (ramp > 0.0 && t > duration - ramp) return 0.5 * peak * (1.0 - std::cos(kPi * (duration - t) / ramp));
    return peak;
  }

  double derivative(double t) const {
    if (t < 0.0 || t > duration) return 0.0;
    const double ramp = ramp_fraction * duration;
    if (ramp > 0.0 && t < ramp) return 0.5 * peak * kPi / ramp * std::sin(kPi * t / ramp);
    if (ramp > 0.0 && t > duration - ramp) return -0.5 * peak * kPi / ramp * std::sin(kPi * (duration - t) / ramp);
    return 0.0;
  }
};

/// One tone driving the |k-1> <-> |k> transition:
///   amplitude * [Omega(t) cos(w t + p) + drag_weight * Omega'(t) / anharmonicity * sin(w t + p)]
/// with w = 2 pi (frequency + detuning) and p = base_phase.
struct DriveTone {
  double frequency = 0.0;  // GHz
  double base_phase = 0.0;
  double detuning = 0.0;  // GHz
  double drag_weight = 0.0;
  double amplitude = 1.0;  // dimensionless, multiplies Omega
};

struct MultiToneDrive {
  std::vector<DriveTone> tones;
  /// Angular anharmonicity 2 pi |f12 - f01| (rad/ns) normalising the DRAG term.
  double anharmonicity = 1.0;

  int size() const { return static_cast<int>(tones.size()); }
};

/// Tones realising D(theta, phi) in the rotating-wave limit: tone k has
/// amplitude sqrt(k(d-k)) / |<k-1|n|k>| and phase -pi/2 - phi - arg(<k-1|n|k>),
/// so that alone it gives Rabi frequency Omega sqrt(k(d-k)).
inline MultiToneDrive calibrated_drive(const TransmonEigenSystem& sys, int d, double phi = 0.0) {
  if (d < 2 || d >= sys.dim_kept) throw std::invalid_argument("calibrated_drive: need 2 <= d < kept levels");
  MultiToneDrive drive;
  drive.anharmonicity = kTwoPi * std::abs(sys.transition(1) - sys.transition(0));
  for (int k = 1; k < d; ++k) {
    const Complex n = sys.charge_matrix(k - 1, k);
    DriveTone tone;
    tone.frequency = sys.transition(k - 1);
    tone.amplitude = std::sqrt(static_cast<double>(k * (d - k))) / std::abs(n);
    tone.base_phase = -kPi / 2 - phi - std::arg(n);
    drive.tones.push_back(tone);
  }
  return drive;
}

/// Pulse parameters with analytic derivatives. Layout of the parameter
/// vector: detunings of the selected tones, then DRAG weights.
struct PulseParameterSet {
  bool detunings = false;
  bool drag = false;

  int count(int tones) const { return (detunings ? tones : 0) + (drag ? tones : 0); }
};

inline RealVector pack_parameters(const MultiToneDrive& drive, PulseParameterSet set) {
  RealVector x(set.count(drive.size()));
  int i = 0;
  if (set.detunings)
    for (const auto& t : drive.tones) x(i++) = t.detuning;
  if (set.drag)
    for (const auto& t : drive.tones) x(i++) = t.drag_weight;
  return x;
}

inline void unpack_parameters(MultiToneDrive& drive, PulseParameterSet set, const RealVector& x) {
  if (x.size() != set.count(drive.size())) throw std::invalid_argument("pulse parameter vector has the wrong length");
  int i = 0;
  if (set.detunings)
    for (auto& t : drive.tones) t.detuning = x(i++);
  if (set.drag)
    for (auto& t : drive.tones) t.drag_weight = x(i++);
}

struct IntegratorOptions {
  double abs_tol = 1e-13;
  double rel_tol = 1e-13;
  double initial_step = 1e-3;  // ns
  long max_steps = 20'000'000;
};

struct PropagationResult {
  /// Lab-frame columns U(T)|k>, k < d, over all simulated levels.
  ComplexMatrix lab;
  /// e^{i H0 T} U(T) restricted to the d x d computational block.
  ComplexMatrix frame;
  /// d/dx of `frame` for each GOAT parameter.
  std::vector<ComplexMatrix> frame_derivatives;
  double leakage = 0.0;
  /// max |U^dagger U - I| over the propagated columns.
  double unitarity_drift = 0.0;
  long steps = 0;
};

namespace detail {

// Time-dependent coefficient c(t) of the charge operator and its parameter
// derivatives.
struct DriveSignal {
  const MultiToneDrive* drive;
  const PulseEnvelope* envelope;
  PulseParameterSet set;

  double value(double t) const {
    const double om = envelope->value(t), dom = envelope->derivative(t);
    double c = 0.0;
    for (const auto& tone : drive->tones) {
      const double arg = kTwoPi * (tone.frequency + tone.detuning) * t + tone.base_phase;
      c += tone.amplitude * (om * std::cos(arg) + tone.drag_weight * dom / drive->anharmonicity * std::sin(arg));
    }
    return c;
  }

  void derivatives(double t, std::vector<double>& out) const {
    const double om = envelope->value(t), dom = envelope->derivative(t);
    out.clear();
    if (set.detunings) {
      for (const auto& tone : drive->tones) {
        const double arg = kTwoPi * (tone.frequency + tone.detuning) * t + tone.base_phase;
        out.push_back(tone.amplitude * kTwoPi * t * (-om * std::sin(arg) + tone.drag_weight * dom / drive->anharmonicity * std::cos(arg)));
      }
    }
    if (set.drag) {
      for (const auto& tone : drive->tones) {
        const double arg = kTwoPi * (tone.frequency + tone.detuning) * t + tone.base_phase;
        out.push_back(tone.amplitude * dom / drive->anharmonicity * std::sin(arg));
      }
    }
  }
};

}  // namespace detail

/// Integrates the drive H(t) = H0 + c(t) n over [0, T] in the interaction
/// picture of H0, which is exact (no rotating-wave approximation) and yields
/// e^{i H0 T} U(T) directly.
///
/// Without GOAT parameters only the d computational columns are propagated.
/// With parameters the full propagator is carried together with, per
/// parameter x_p, the co-integrated block G_p(t) = int_0^t dc/dx_p U^dagger n U ds
/// (first d columns), so that dU(T)/dx_p = -i U(T) G_p(T). This is the GOAT
/// equation dU_x/dt = -i (H_x U + H U_x) solved in variation-of-constants form.
inline PropagationResult propagate(const TransmonEigenSystem& sys, int d, const MultiToneDrive& drive, const PulseEnvelope& envelope,
                                   PulseParameterSet goat = {}, const IntegratorOptions& options = {}) {
  envelope.validate();
  const int m = sys.dim_kept;
  if (d < 2 || d > m) throw std::invalid_argument("propagate: need 2 <= d <= simulated levels");
  const int params = goat.count(drive.size());
  const int cols = params > 0 ? m : d;
  const int ublock = m * cols, gblock = m * d;
  // Real state holding interleaved (re, im) pairs, viewed as complex below.
  using State = RealVector;
  State state = State::Zero(2 * (ublock + params * gblock));
  for (int k = 0; k < cols; ++k) state(2 * (k * m + k)) = 1.0;
  auto as_complex = [](const State& x) { return reinterpret_cast<const Complex*>(x.data()); };
  auto as_complex_mut = [](State& x) { return reinterpret_cast<Complex*>(x.data()); };

  const RealVector omega = kTwoPi * sys.energies;  // rad/ns
  const ComplexMatrix& n = sys.charge_matrix;
  const detail::DriveSignal signal{&drive, &envelope, goat};
  std::vector<double> dc;
  ComplexVector phase(m);
  ComplexMatrix n_int(m, m), product(m, cols), sandwich(m, d);

  auto rhs = [&](const State& x, State& dxdt, double t) {
    for (int i = 0; i < m; ++i) phase(i) = std::polar(1.0, omega(i) * t);
    n_int = phase.asDiagonal() * n * phase.conjugate().asDiagonal();
    const double c = signal.value(t);
    Eigen::Map<const ComplexMatrix> u(as_complex(x), m, cols);
    Eigen::Map<ComplexMatrix> du(as_complex_mut(dxdt), m, cols);
    product.noalias() = n_int * u;
    du = (-kI * c) * product;
    if (params > 0) {
      signal.derivatives(t, dc);
      sandwich.noalias() = u.adjoint() * product.leftCols(d);
      for (int p = 0; p < params; ++p) {
        Eigen::Map<ComplexMatrix> dg(as_complex_mut(dxdt) + ublock + p * gblock, m, d);
        dg = dc[static_cast<size_t>(p)] * sandwich;
      }
    }
  };

  namespace odeint = boost::numeric::odeint;
  using Stepper = odeint::runge_kutta_fehlberg78<State, double, State, double, odeint::vector_space_algebra>;
  auto stepper = odeint::make_controlled(options.abs_tol, options.rel_tol, Stepper());
  PropagationResult res;
  try {
    res.steps = static_cast<long>(odeint::integrate_adaptive(stepper, rhs, state, 0.0, envelope.duration, options.initial_step));
  } catch (const std::exception& e) {
    throw NumericalError(std::string("propagate: integration failed: ") + e.what());
  }
  if (!state.allFinite()) throw NumericalError("propagate: non-finite propagator");

  Eigen::Map<const ComplexMatrix> u_int(as_complex(state), m, cols);
  ComplexVector back(m);
  for (int i = 0; i < m; ++i) back(i) = std::polar(1.0, -omega(i) * envelope.duration);
  res.lab = back.asDiagonal() * u_int.leftCols(d);
  res.frame = u_int.topLeftCorner(d, d);
  res.leakage = std::max(0.0, 1.0 - res.frame.squaredNorm() / d);
  res.unitarity_drift = max_abs(u_int.adjoint() * u_int - ComplexMatrix::Identity(cols, cols));
  for (int p = 0; p < params; ++p) {
    Eigen::Map<const ComplexMatrix> g(as_complex(state) + ublock + p * gblock, m, d);
    res.frame_derivatives.push_back((-kI * (u_int.topRows(d) * g)).eval());
  }
  return res;
}

struct FrameResult {
  ComplexMatrix u;
  double leakage = 0.0;
};

/// e^{i H0 T} applied to lab-frame columns, restricted to the d-level block.
/// Leakage is 1 - sum |block|^2 / d.
inline FrameResult frame_transform(const ComplexMatrix& u_lab, const TransmonEigenSystem& sys, double duration) {
  const int d = static_cast<int>(u_lab.cols());
  if (u_lab.rows() > sys.dim_kept || u_lab.rows() < d) throw std::invalid_argument("frame_transform: shape mismatch");
  FrameResult out;
  out.u.resize(d, d);
  for (int i = 0; i < d; ++i) out.u.row(i) = std::polar(1.0, kTwoPi * sys.energies(i) * duration) * u_lab.row(i);
  out.leakage = std::max(0.0, 1.0 - out.u.squaredNorm() / d);
  return out;
}

/// (1/d^2) |Tr(target^dagger u)|^2 for a possibly non-unitary block u.
inline double gate_fidelity(const ComplexMatrix& target, const ComplexMatrix& u) {
  if (target.rows() != u.rows() || target.cols() != u.cols()) throw std::invalid_argument("gate_fidelity: shape mismatch");
  const double d = static_cast<double>(target.rows());
  return std::norm((target.adjoint() * u).trace()) / (d * d);
}

struct CorrectionSet {
  SnapPhases pre_snap;
  SnapPhases post_snap;
  std::vector<double> detunings;     // GHz, per tone
  std::vector<double> drag_weights;  // per tone
};

struct PhaseCorrection {
  SnapPhases pre;
  SnapPhases post;
  double fidelity = 0.0;
  double uncorrected = 0.0;
};

namespace detail {

// F(pre, post) = |Tr(W S(post) U S(pre))|^2 / d^2 with W = target^dagger.
// x = [pre_0..pre_{d-1}, post_0..post_{d-1}].
inline double phase_objective(const ComplexMatrix& w, const ComplexMatrix& u, const RealVector& x, RealVector& grad, Complex* trace_out = nullptr) {
  const int d = static_cast<int>(u.rows());
  ComplexVector a(d), b(d);
  for (int i = 0; i < d; ++i) {
    b(i) = std::polar(1.0, x(i));
    a(i) = std::polar(1.0, x(d + i));
  }
  // Tr(W S_a U S_b) = sum_ij W_ji a_i U_ij b_j
  const ComplexMatrix g = w.transpose().cwiseProduct(u);  // g_ij = W_ji U_ij
  const ComplexVector gb = g * b;
  const ComplexVector ga = g.transpose() * a;
  const Complex tr = (a.array() * gb.array()).sum();
  if (trace_out) *trace_out = tr;
  const double dd = static_cast<double>(d) * d;
  grad.resize(2 * d);
  for (int j = 0; j < d; ++j) grad(j) = 2.0 * (std::conj(tr) * (kI * b(j) * ga(j))).real() / dd;
  for (int i = 0; i < d; ++i) grad(d + i) = 2.0 * (std::conj(tr) * (kI * a(i) * gb(i))).real() / dd;
  return std::norm(tr) / dd;
}

}  // namespace detail

/// Best pre/post SNAP phases for a fixed frame propagator. Starts from zero
/// phases, so the result never falls below the uncorrected fidelity.
inline PhaseCorrection optimize_phase_corrections(const ComplexMatrix& u_frame, const ComplexMatrix& target, const RealVector* warm_start = nullptr) {
  const int d = static_cast<int>(u_frame.rows());
  if (target.rows() != d || target.cols() != d || u_frame.cols() != d) throw std::invalid_argument("optimize_phase_corrections: shape mismatch");
  const ComplexMatrix w = target.adjoint();
  Objective f = [&](const RealVector& x, RealVector& g) {
    const double v = detail::phase_objective(w, u_frame, x, g);
    g = -g;
    return 1.0 - v;
  };
  MinimizeOptions opt;
  opt.max_iterations = 2000;
  opt.gradient_tolerance = 1e-13;
  opt.function_tolerance = 1e-15;
  opt.stall_iterations = 20;
  RealVector zero = RealVector::Zero(2 * d);
  MinimizeResult best = minimize_bfgs(f, zero, opt);
  if (warm_start && warm_start->size() == 2 * d) {
    MinimizeResult warm = minimize_bfgs(f, *warm_start, opt);
    if (warm.value < best.value) best = warm;
  }
  PhaseCorrection out;
  out.uncorrected = gate_fidelity(target, u_frame);
  out.pre = SnapPhases::zeros(d);
  out.post = SnapPhases::zeros(d);
  for (int i = 0; i < d; ++i) {
    out.pre[i] = best.x(i);
    out.post[i] = best.x(d + i);
  }
  out.fidelity = std::max(out.uncorrected, 1.0 - best.value);
  if (1.0 - best.value < out.uncorrected) {
    out.pre = SnapPhases::zeros(d);
    out.post = SnapPhases::zeros(d);
  }
  return out;
}

inline ComplexMatrix apply_phase_corrections(const ComplexMatrix& u_frame, const SnapPhases& pre, const SnapPhases& post) {
  const SpinDimension dim(static_cast<int>(u_frame.rows()));
  return snap(dim, post) * u_frame * snap(dim, pre);
}

/// A displacement pulse problem: device, qudit size, duration, target angle.
struct PulseProblem {
  TransmonSpec device;
  int d = 3;
  double duration = 48.0;  // ns
  double theta = kPi / 2;
  double phi = 0.0;
  double ramp_fraction = 0.25;
  double amplitude_scale = 1.0;
  int guard_levels = 3;
  IntegratorOptions integrator;

  int simulated_levels() const { return d + guard_levels; }
  ComplexMatrix target() const { return displacement(SpinDimension(d), theta, phi); }
};

/// Precomputed model pieces for repeated propagation of one problem.
class PulseModel {
 public:
  explicit PulseModel(PulseProblem problem)
      : problem_(std::move(problem)), sys_(diagonalize(problem_.device, problem_.simulated_levels())),
        base_(calibrated_drive(sys_, problem_.d, problem_.phi)),
        envelope_(PulseEnvelope::for_rotation(problem_.theta, problem_.duration, problem_.ramp_fraction, problem_.amplitude_scale)),
        target_(problem_.target()) {}

  const PulseProblem& problem() const { return problem_; }
  const TransmonEigenSystem& eigensystem() const { return sys_; }
  const MultiToneDrive& base_drive() const { return base_; }
  const PulseEnvelope& envelope() const { return envelope_; }
  const ComplexMatrix& target() const { return target_; }

  MultiToneDrive drive_with(const std::vector<double>& detunings, const std::vector<double>& drag) const {
    MultiToneDrive drv = base_;
    for (int k = 0; k < drv.size(); ++k) {
      if (!detunings.empty()) drv.tones[static_cast<size_t>(k)].detuning = detunings.at(static_cast<size_t>(k));
      if (!drag.empty()) drv.tones[static_cast<size_t>(k)].drag_weight = drag.at(static_cast<size_t>(k));
    }
    return drv;
  }

  PropagationResult run(const MultiToneDrive& drive, PulseParameterSet goat = {}, const IntegratorOptions* integrator = nullptr) const {
    return propagate(sys_, problem_.d, drive, envelope_, goat, integrator ? *integrator : problem_.integrator);
  }

 private:
  PulseProblem problem_;
  TransmonEigenSystem sys_;
  MultiToneDrive base_;
  PulseEnvelope envelope_;
  ComplexMatrix target_;
};

/// Fidelity after optimal phase corrections and its gradient with respect to
/// the GOAT parameters (envelope theorem: the phases are held at their
/// optimum).
struct GoatEvaluation {
  double fidelity = 0.0;
  RealVector gradient;
  PhaseCorrection phases;
  PropagationResult propagation;
};

inline GoatEvaluation goat_evaluate(const PulseModel& model, const MultiToneDrive& drive, PulseParameterSet set, const RealVector* warm_phases = nullptr,
                                    const IntegratorOptions* integrator = nullptr) {
  GoatEvaluation ev;
  ev.propagation = model.run(drive, set, integrator);
  ev.phases = optimize_phase_corrections(ev.propagation.frame, model.target(), warm_phases);
  const SpinDimension dim(model.problem().d);
  const ComplexMatrix s_pre = snap(dim, ev.phases.pre), s_post = snap(dim, ev.phases.post);
  const ComplexMatrix w = model.target().adjoint();
  const Complex tr = (w * s_post * ev.propagation.frame * s_pre).trace();
  const double dd = static_cast<double>(dim.d()) * dim.d();
  ev.fidelity = std::norm(tr) / dd;
  ev.gradient.resize(static_cast<Eigen::Index>(ev.propagation.frame_derivatives.size()));
  for (size_t p = 0; p < ev.propagation.frame_derivatives.size(); ++p) {
    const Complex dtr = (w * s_post * ev.propagation.frame_derivatives[p] * s_pre).trace();
    ev.gradient(static_cast<Eigen::Index>(p)) = 2.0 * (std::conj(tr) * dtr).real() / dd;
  }
  return ev;
}

/// Fixed-phase variant: fidelity of S(post) U S(pre) and its exact gradient.
inline std::pair<double, RealVector> goat_fidelity_gradient(const PulseModel& model, const MultiToneDrive& drive, PulseParameterSet set,
                                                            const SnapPhases& pre, const SnapPhases& post) {
  const auto prop = model.run(drive, set);
  const SpinDimension dim(model.problem().d);
  const ComplexMatrix s_pre = snap(dim, pre), s_post = snap(dim, post);
  const ComplexMatrix w = model.target().adjoint();
  const Complex tr = (w * s_post * prop.frame * s_pre).trace();
  const double dd = static_cast<double>(dim.d()) * dim.d();
  RealVector g(static_cast<Eigen::Index>(prop.frame_derivatives.size()));
  for (size_t p = 0; p < prop.frame_derivatives.size(); ++p) {
    const Complex dtr = (w * s_post * prop.frame_derivatives[p] * s_pre).trace();
    g(static_cast<Eigen::Index>(p)) = 2.0 * (std::conj(tr) * dtr).real() / dd;
  }
  return {std::norm(tr) / dd, g};
}

struct GoatOptions {
  int max_iterations = 200;
  int max_evaluations = std::numeric_limits<int>::max();
  double gradient_tolerance = 1e-7;
  /// Tolerance used while searching; the returned fidelity is re-evaluated
  /// with the problem's own integrator settings.
  IntegratorOptions search_integrator{1e-10, 1e-10};
};

struct GoatResult {
  CorrectionSet corrections;
  double fidelity = 0.0;
  /// Infinity norm of dF/dx at the returned point, detunings per MHz.
  double gradient_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  double leakage = 0.0;
};

/// Optimises the selected pulse parameters (starting from `start`) with
/// phase corrections re-optimised at every evaluation.
inline GoatResult goat_optimize(const PulseModel& model, PulseParameterSet set, const CorrectionSet& start, const GoatOptions& options = {}) {
  if (set.count(model.base_drive().size()) == 0) throw std::invalid_argument("goat_optimize: no free parameters selected");
  MultiToneDrive drive = model.drive_with(start.detunings, start.drag_weights);
  const int d = model.problem().d;
  RealVector phases(2 * d);
  phases.setZero();
  if (start.pre_snap.size() == d && start.post_snap.size() == d) {
    for (int i = 0; i < d; ++i) {
      phases(i) = start.pre_snap[i];
      phases(d + i) = start.post_snap[i];
    }
  }
  GoatEvaluation last;
  // Detunings are optimised in MHz so both parameter families are O(1).
  const int tones = drive.size();
  RealVector scale = RealVector::Ones(set.count(tones));
  if (set.detunings) scale.head(tones).setConstant(1e-3);

  Objective f = [&](const RealVector& y, RealVector& g) {
    MultiToneDrive trial = drive;
    unpack_parameters(trial, set, y.cwiseProduct(scale));
    GoatEvaluation ev = goat_evaluate(model, trial, set, &phases, &options.search_integrator);
    g = -ev.gradient.cwiseProduct(scale);
    for (int i = 0; i < d; ++i) {
      phases(i) = ev.phases.pre[i];
      phases(d + i) = ev.phases.post[i];
    }
    last = std::move(ev);
    return 1.0 - last.fidelity;
  };
  MinimizeOptions opt;
  opt.max_iterations = options.max_iterations;
  opt.gradient_tolerance = options.gradient_tolerance;
  opt.max_evaluations = options.max_evaluations;
  opt.function_tolerance = 1e-13;
  opt.stall_iterations = 5;
  const RealVector y0 = pack_parameters(drive, set).cwiseQuotient(scale);
  MinimizeResult mr = minimize_bfgs(f, y0, opt);

  unpack_parameters(drive, set, mr.x.cwiseProduct(scale));
  const GoatEvaluation final_eval = goat_evaluate(model, drive, set, &phases);
  GoatResult out;
  out.fidelity = final_eval.fidelity;
  out.gradient_norm = final_eval.gradient.cwiseProduct(scale).lpNorm<Eigen::Infinity>();
  out.iterations = mr.iterations;
  out.evaluations = mr.evaluations;
  out.converged = out.gradient_norm < options.gradient_tolerance;
  out.leakage = final_eval.propagation.leakage;
  out.corrections.pre_snap = final_eval.phases.pre;
  out.corrections.post_snap = final_eval.phases.post;
  for (const auto& t : drive.tones) {
    out.corrections.detunings.push_back(t.detuning);
    out.corrections.drag_weights.push_back(t.drag_weight);
  }
  return out;
}

/// Fidelities for the four correction levels, each warm-started from the
/// previous so the ordering holds up to optimiser tolerance.
struct CorrectionHierarchy {
  double none = 0.0;
  double phase = 0.0;
  double phase_detuning = 0.0;
  double all = 0.0;
  double leakage_none = 0.0;
  double leakage_all = 0.0;
  CorrectionSet phase_only;
  CorrectionSet with_detuning;
  CorrectionSet full;
  GoatResult detuning_run;
  GoatResult full_run;
};

inline CorrectionHierarchy correction_hierarchy(const PulseModel& model, const GoatOptions& options = {}) {
  CorrectionHierarchy h;
  const int tones = model.base_drive().size();
  const auto bare = model.run(model.base_drive());
  h.none = gate_fidelity(model.target(), bare.frame);
  h.leakage_none = bare.leakage;
  const auto ph = optimize_phase_corrections(bare.frame, model.target());
  h.phase = ph.fidelity;
  h.phase_only = {ph.pre, ph.post, std::vector<double>(static_cast<size_t>(tones), 0.0), std::vector<double>(static_cast<size_t>(tones), 0.0)};

  const auto& det = h.detuning_run = goat_optimize(model, {.detunings = true, .drag = false}, h.phase_only, options);
  h.with_detuning = det.fidelity >= h.phase ? det.corrections : h.phase_only;
  h.phase_detuning = std::max(det.fidelity, h.phase);

  const auto& all = h.full_run = goat_optimize(model, {.detunings = true, .drag = true}, h.with_detuning, options);
  h.full = all.fidelity >= h.phase_detuning ? all.corrections : h.with_detuning;
  h.all = std::max(all.fidelity, h.phase_detuning);
  h.leakage_all = all.leakage;
  return h;
}

/// Least-squares fit of infidelity = c / T^2 (no offset).
struct InverseSquareFit {
  double coefficient = 0.0;  // ns^2
  double r_squared = 0.0;
};

inline InverseSquareFit fit_inverse_square(const std::vector<double>& durations, const std::vector<double>& infidelities) {
  if (durations.size() != infidelities.size() || durations.size() < 2) throw std::invalid_argument("fit_inverse_square: need at least two points");
  double sxx = 0.0, sxy = 0.0, mean = 0.0;
  for (size_t i = 0; i < durations.size(); ++i) {
    if (!(durations[i] > 0.0)) throw std::invalid_argument("fit_inverse_square: durations must be positive");
    const double x = 1.0 / (durations[i] * durations[i]);
    sxx += x * x;
    sxy += x * infidelities[i];
    mean += infidelities[i];
  }
  mean /= static_cast<double>(durations.size());
  InverseSquareFit fit;
  fit.coefficient = sxy / sxx;
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < durations.size(); ++i) {
    ss_res += std::pow(infidelities[i] - fit.coefficient / (durations[i] * durations[i]), 2);
    ss_tot += std::pow(infidelities[i] - mean, 2);
  }
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

}  // namespace quditkit
