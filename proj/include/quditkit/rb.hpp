#pragma once

#include "quditkit/core.hpp"
#include "quditkit/decomposer.hpp"
#include "quditkit/gates.hpp"
#include "quditkit/parallel.hpp"

#include <boost/math/tools/minima.hpp>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <array>
#include <limits>
#include <vector>

namespace quditkit {

/// Logical qubit spanned by the even and odd spin cat states.
struct CatEncoding {
  SpinDimension dim{2};
  ComplexVector logical0;
  ComplexVector logical1;
  /// Program mapping |0> onto logical0 (pi/2 pulses only).
  SnapDisplacementProgram encoder;
  double encoder_infidelity = 0.0;

  /// d x 2 isometry [logical0, logical1].
  ComplexMatrix isometry() const {
    ComplexMatrix v(dim.d(), 2);
    v.col(0) = logical0;
    v.col(1) = logical1;
    return v;
  }
};

/// Builds the cat encoding and searches the shallowest pi/2-pulse program
/// preparing logical0 from |0>.
/// RB sequences compound gate errors, so programs are polished to machine
/// precision regardless of the caller's threshold.
inline DecomposeOptions exact_synthesis(DecomposeOptions options) {
  options.threshold = std::min(options.threshold, 1e-14);
  options.max_iterations = std::max(options.max_iterations, 20000);
  return options;
}

inline CatEncoding build_cat_encoding(SpinDimension dim, const DecomposeOptions& options = {}) {
  const int d = dim.d();
  CatEncoding enc;
  enc.dim = dim;
  enc.logical0 = cat_state(dim, +1);
  enc.logical1 = cat_state(dim, -1);
  for (int n = 0; n < d; ++n) {
    const bool even = n % 2 == 0;
    if (std::abs(even ? enc.logical1(n) : enc.logical0(n)) > 1e-12) throw NumericalError("build_cat_encoding: cat state has wrong parity support");
  }
  if (std::abs(enc.logical0.dot(enc.logical1)) > 1e-12) throw NumericalError("build_cat_encoding: logical states are not orthogonal");

  const SynthesisTarget target = SynthesisTarget::state(basis_state(d, 0), enc.logical0);
  for (int depth = 1; depth <= 2 * d; ++depth) {
    const DecomposeResult r = synthesize(target, dim, depth, SynthesisMode::pi_half_canonical, exact_synthesis(options));
    if (r.infidelity <= 1e-12) {
      enc.encoder = r.program;
      enc.encoder_infidelity = r.infidelity;
      return enc;
    }
  }
  throw NumericalError("build_cat_encoding: no encoder program found");
}

// ---------------------------------------------------------------------------
// Single-qubit Clifford group

/// The 24 single-qubit Cliffords as C = R_a S^k, index 4a + k, with
/// R = {I, X, H, Z H, S H, S^dagger H}. Indices 0..3 are diagonal.
inline const std::array<ComplexMatrix, 24>& clifford_matrices() {
  static const std::array<ComplexMatrix, 24> table = [] {
    const double r = 1.0 / std::sqrt(2.0);
    ComplexMatrix x(2, 2), h(2, 2), z(2, 2), s(2, 2);
    x << 0, 1, 1, 0;
    h << r, r, r, -r;
    z << 1, 0, 0, -1;
    s << 1, 0, 0, kI;
    const std::array<ComplexMatrix, 6> reps{identity(2), x, h, z * h, s * h, s.adjoint() * h};
    std::array<ComplexMatrix, 24> out;
    for (int a = 0; a < 6; ++a) {
      ComplexMatrix sk = identity(2);
      for (int k = 0; k < 4; ++k) {
        out[static_cast<size_t>(4 * a + k)] = reps[static_cast<size_t>(a)] * sk;
        sk = sk * s;
      }
    }
    return out;
  }();
  return table;
}

/// Index of a 2 x 2 unitary in the Clifford table (global phase ignored), or -1.
inline int clifford_index(const ComplexMatrix& u, double tol = 1e-6) {
  const auto& table = clifford_matrices();
  for (int i = 0; i < 24; ++i) {
    if (phase_aligned_distance(u, table[static_cast<size_t>(i)]) < tol) return i;
  }
  return -1;
}

/// product[a][b] = index of C_a C_b; inverse[a] = index of C_a^dagger.
struct CliffordTable {
  std::array<std::array<int, 24>, 24> product{};
  std::array<int, 24> inverse{};
};

inline const CliffordTable& clifford_table() {
  static const CliffordTable t = [] {
    CliffordTable out;
    const auto& m = clifford_matrices();
    for (int a = 0; a < 24; ++a) {
      for (int b = 0; b < 24; ++b) {
        const int c = clifford_index(m[static_cast<size_t>(a)] * m[static_cast<size_t>(b)]);
        if (c < 0) throw NumericalError("clifford_table: group is not closed");
        out.product[static_cast<size_t>(a)][static_cast<size_t>(b)] = c;
      }
      out.inverse[static_cast<size_t>(a)] = clifford_index(m[static_cast<size_t>(a)].adjoint());
    }
    return out;
  }();
  return t;
}

struct CompiledClifford {
  int index = 0;
  SnapDisplacementProgram program;
  double infidelity = 0.0;
};

/// Fidelity of a d-level unitary to a logical gate on the cat subspace,
/// |Tr(V^dagger U V C^dagger)|^2 / 4.
inline double logical_fidelity(const ComplexMatrix& u, const ComplexMatrix& logical, const CatEncoding& enc) {
  const ComplexMatrix v = enc.isometry();
  return std::norm((logical.adjoint() * v.adjoint() * u * v).trace()) / 4.0;
}

/// Diagonal Cliffords become one SNAP layer (even levels take the phase of
/// C_00, odd levels that of C_11). All others are searched as two pi/2
/// pulses between three SNAP layers.
inline CompiledClifford compile_logical_clifford(int index, const CatEncoding& enc, const DecomposeOptions& options = {}) {
  if (index < 0 || index >= 24) throw std::invalid_argument("compile_logical_clifford: index must be in [0, 24)");
  const ComplexMatrix& c = clifford_matrices()[static_cast<size_t>(index)];
  const SpinDimension dim = enc.dim;
  CompiledClifford out;
  out.index = index;
  if (index < 4) {
    out.program = SnapDisplacementProgram::identity(dim, 0, SynthesisMode::pi_half_canonical);
    for (int n = 0; n < dim.d(); ++n) out.program.snaps[0][n] = std::arg(n % 2 == 0 ? c(0, 0) : c(1, 1));
  } else {
    const ComplexMatrix v = enc.isometry();
    const DecomposeResult r = synthesize(SynthesisTarget::subspace(c, v, v), dim, 2, SynthesisMode::pi_half_canonical, exact_synthesis(options));
    out.program = r.program;
  }
  out.infidelity = std::max(0.0, 1.0 - logical_fidelity(reconstruct(out.program), c, enc));
  if (out.infidelity > 1e-12) {
    throw NumericalError("compile_logical_clifford: index " + std::to_string(index) + " reached infidelity " + std::to_string(out.infidelity));
  }
  return out;
}

struct CliffordSet {
  CatEncoding encoding;
  std::vector<CompiledClifford> gates;

  /// Average number of physical displacement pulses per Clifford.
  double average_pulses() const {
    double n = 0.0;
    for (const auto& g : gates) n += g.program.pulse_count();
    return n / static_cast<double>(gates.size());
  }
};

inline CliffordSet compile_clifford_set(SpinDimension dim, const DecomposeOptions& options = {}) {
  CliffordSet set;
  set.encoding = build_cat_encoding(dim, options);
  for (int i = 0; i < 24; ++i) set.gates.push_back(compile_logical_clifford(i, set.encoding, options));
  return set;
}

// ---------------------------------------------------------------------------
// Channels

/// Kraus representation of a channel. `error_weight` is q for perturbed
/// displacements and 1 for a bare random map.
struct NoisyChannel {
  std::vector<ComplexMatrix> kraus;
  double error_weight = 0.0;

  int dim() const { return kraus.empty() ? 0 : static_cast<int>(kraus.front().rows()); }

  /// max |sum K^dagger K - I|.
  double completeness_error() const {
    if (kraus.empty()) return 1.0;
    ComplexMatrix s = ComplexMatrix::Zero(dim(), dim());
    for (const auto& k : kraus) s += k.adjoint() * k;
    return max_abs(s - identity(dim()));
  }

  ComplexMatrix apply(const ComplexMatrix& rho) const {
    ComplexMatrix out = ComplexMatrix::Zero(rho.rows(), rho.cols());
    for (const auto& k : kraus) out += k * rho * k.adjoint();
    return out;
  }
};

/// Random channel from the Ginibre-Choi ensemble: W = G G^dagger for a
/// d^2 x rank complex Gaussian G, normalised to J = (I x Y^{-1/2}) W (I x Y^{-1/2})
/// with Y = Tr_out W, Kraus operators read off the eigenvectors of J.
/// Choi index ordering is (out, in).
inline NoisyChannel random_cptp_map(int d, std::uint64_t seed, int rank = 0) {
  if (d < 2) throw std::invalid_argument("random_cptp_map: need d >= 2");
  const int dd = d * d;
  if (rank <= 0) rank = dd;
  if (rank > dd) throw std::invalid_argument("random_cptp_map: rank must be <= d^2");
  Rng rng(seed);
  ComplexMatrix g(dd, rank);
  for (int c = 0; c < rank; ++c)
    for (int r = 0; r < dd; ++r) g(r, c) = rng.complex_normal();
  const ComplexMatrix w = g * g.adjoint();
  ComplexMatrix y = ComplexMatrix::Zero(d, d);
  for (int a = 0; a < d; ++a) y += w.block(a * d, a * d, d, d);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> ey(y);
  const ComplexMatrix y_inv_sqrt = ey.eigenvectors() * ey.eigenvalues().cwiseSqrt().cwiseInverse().cast<Complex>().asDiagonal() * ey.eigenvectors().adjoint();
  const ComplexMatrix m = Eigen::kroneckerProduct(identity(d), y_inv_sqrt);
  const ComplexMatrix j = m * w * m;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> ej(0.5 * (j + j.adjoint()));
  NoisyChannel ch;
  ch.error_weight = 1.0;
  const double cutoff = 1e-14 * ej.eigenvalues().cwiseAbs().maxCoeff();
  for (int k = dd - 1; k >= 0; --k) {
    const double lambda = ej.eigenvalues()(k);
    if (lambda <= cutoff) continue;
    ComplexMatrix kr(d, d);
    for (int a = 0; a < d; ++a)
      for (int i = 0; i < d; ++i) kr(a, i) = std::sqrt(lambda) * ej.eigenvectors()(a * d + i, k);
    ch.kraus.push_back(std::move(kr));
  }
  return ch;
}

/// D_q(rho) = (1-q) D rho D^dagger + q A(D rho D^dagger).
inline NoisyChannel perturbed_unitary(const ComplexMatrix& u, const NoisyChannel& error, double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("perturbed_unitary: q must lie in [0, 1]");
  NoisyChannel ch;
  ch.error_weight = q;
  if (q < 1.0) ch.kraus.push_back(std::sqrt(1.0 - q) * u);
  if (q > 0.0)
    for (const auto& a : error.kraus) ch.kraus.push_back(std::sqrt(q) * a * u);
  return ch;
}

/// Generalised Pauli (Weyl) Kraus set of the fully depolarising channel.
inline NoisyChannel depolarizing_channel(int d) {
  ComplexMatrix x = ComplexMatrix::Zero(d, d), z = ComplexMatrix::Zero(d, d);
  for (int k = 0; k < d; ++k) {
    x((k + 1) % d, k) = 1.0;
    z(k, k) = std::polar(1.0, kTwoPi * k / d);
  }
  NoisyChannel ch;
  ch.error_weight = 1.0;
  ComplexMatrix xa = identity(d);
  for (int a = 0; a < d; ++a) {
    ComplexMatrix zb = identity(d);
    for (int b = 0; b < d; ++b) {
      ch.kraus.push_back(xa * zb / static_cast<double>(d));
      zb = zb * z;
    }
    xa = xa * x;
  }
  return ch;
}

/// F_avg = (sum_i |Tr(U^dagger K_i)|^2 + d) / (d^2 + d).
inline double average_gate_fidelity(const NoisyChannel& channel, const ComplexMatrix& target) {
  const int d = static_cast<int>(target.rows());
  if (channel.dim() != d) throw std::invalid_argument("average_gate_fidelity: dimension mismatch");
  if (channel.completeness_error() > 1e-9) throw std::invalid_argument("average_gate_fidelity: Kraus set is not complete");
  double s = 0.0;
  for (const auto& k : channel.kraus) s += std::norm((target.adjoint() * k).trace());
  return (s + d) / (static_cast<double>(d) * d + d);
}

/// Liouville matrix on column-stacked vec(rho): sum_i conj(K_i) x K_i.
inline ComplexMatrix superoperator(const NoisyChannel& channel) {
  const int d = channel.dim();
  ComplexMatrix s = ComplexMatrix::Zero(d * d, d * d);
  for (const auto& k : channel.kraus) s += Eigen::kroneckerProduct(k.conjugate(), k);
  return s;
}

inline ComplexMatrix unitary_superoperator(const ComplexMatrix& u) { return Eigen::kroneckerProduct(u.conjugate(), u); }

/// Channel of a pi/2-pulse program whose every physical pulse is followed by
/// the error map; SNAP layers are noiseless.
inline ComplexMatrix program_superoperator(const SnapDisplacementProgram& program, const ComplexMatrix& noisy_pulse_superop) {
  program.validate();
  if (program.mode != SynthesisMode::pi_half_canonical && program.depth() > 0) {
    throw std::invalid_argument("program_superoperator: program must use pi/2 pulses only");
  }
  ComplexMatrix s = unitary_superoperator(snap(program.dim, program.snaps[0]));
  for (int k = 0; k < program.depth(); ++k) {
    s = unitary_superoperator(snap(program.dim, program.snaps[static_cast<size_t>(k + 1)])) * (noisy_pulse_superop * s);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Randomized benchmarking

struct RbOptions {
  std::vector<int> lengths{1, 2, 4, 8, 16, 32, 64};
  int sequences = 30;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct RbFit {
  double a = 0.0;
  double p = 1.0;
  double b = 0.0;
  double r_squared = 1.0;
  std::vector<double> residuals;
  bool ok = true;
  std::string message;

  double f_rb() const { return 1.0 - (1.0 - p) / 2.0; }
};

struct RbResult {
  std::vector<int> lengths;
  std::vector<double> survival;
  /// Standard error of the mean over sequences.
  std::vector<double> survival_error;
  RbFit fit;
  /// Worst |trace - 1| seen along any sequence.
  double trace_drift = 0.0;
};

/// Least squares A p^m + B: for fixed p the problem is linear in (A, B), so p
/// is found by a grid scan followed by Brent refinement on (0, 1].
///
/// (A, B) is restricted to A, B >= 0, A + B <= 1 (survival probabilities).
/// Unconstrained, a nearly linear noisy decay is fitted best by p -> 1 with
/// huge opposite-signed A and B.
inline RbFit fit_rb_decay(const std::vector<int>& lengths, const std::vector<double>& survival) {
  if (lengths.size() != survival.size() || lengths.size() < 3) throw std::invalid_argument("fit_rb_decay: need at least three points");
  const Eigen::Index n = static_cast<Eigen::Index>(lengths.size());
  RealVector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = survival[static_cast<size_t>(i)];
  auto solve = [&](double p, double& a, double& b) {
    RealVector u(n);
    for (Eigen::Index i = 0; i < n; ++i) u(i) = std::pow(p, lengths[static_cast<size_t>(i)]);
    const RealVector ones = RealVector::Ones(n);
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](double ca, double cb) {
      const double c = (ca * u + cb * ones - y).squaredNorm();
      if (c < best) {
        best = c;
        a = ca;
        b = cb;
      }
    };
    // interior stationary point
    const double suu = u.squaredNorm(), su = u.sum(), sn = static_cast<double>(n), suy = u.dot(y), sy = y.sum();
    const double det = suu * sn - su * su;
    if (std::abs(det) > 1e-14 * suu * sn) {
      const double ca = (sn * suy - su * sy) / det, cb = (suu * sy - su * suy) / det;
      if (ca >= 0.0 && cb >= 0.0 && ca + cb <= 1.0) {
        consider(ca, cb);
        return best;
      }
    }
    // otherwise the minimum lies on an edge of the triangle
    consider(0.0, std::clamp(sy / sn, 0.0, 1.0));
    if (suu > 0.0) consider(std::clamp(suy / suu, 0.0, 1.0), 0.0);
    const RealVector v = u - ones;
    const double svv = v.squaredNorm();
    const double ca = svv > 0.0 ? std::clamp(v.dot(y - ones) / svv, 0.0, 1.0) : 0.0;
    consider(ca, 1.0 - ca);
    return best;
  };
  RbFit fit;
  const double spread = y.maxCoeff() - y.minCoeff();
  if (spread < 1e-9) {
    fit.p = 1.0;
    fit.a = 0.0;
    fit.b = y.mean();
    fit.residuals.assign(survival.size(), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) fit.residuals[static_cast<size_t>(i)] = y(i) - fit.b;
    return fit;
  }
  double a = 0.0, b = 0.0;
  int best = 1;
  double best_cost = std::numeric_limits<double>::infinity();
  const int grid = 1000;
  for (int k = 1; k <= grid; ++k) {
    const double c = solve(static_cast<double>(k) / grid, a, b);
    if (c < best_cost) {
      best_cost = c;
      best = k;
    }
  }
  const double lo = std::max(1e-6, (best - 1.0) / grid), hi = std::min(1.0, (best + 1.0) / grid);
  const auto r = boost::math::tools::brent_find_minima([&](double p) { return solve(p, a, b); }, lo, hi, 52);
  fit.p = r.first;
  solve(fit.p, a, b);
  fit.a = a;
  fit.b = b;
  const double ss_tot = (y.array() - y.mean()).square().sum();
  double ss_res = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double res = y(i) - (a * std::pow(fit.p, lengths[static_cast<size_t>(i)]) + b);
    fit.residuals.push_back(res);
    ss_res += res * res;
  }
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  if (!(fit.p > 0.0 && fit.p <= 1.0)) {
    fit.ok = false;
    fit.message = "decay parameter outside (0, 1]";
  }
  return fit;
}

/// Noisy channels of every compiled Clifford plus encoder and decoder.
struct NoisyCliffordModel {
  std::vector<ComplexMatrix> cliffords;
  ComplexMatrix encoder;
  ComplexMatrix decoder;
  int dim = 0;
};

inline NoisyCliffordModel build_noisy_model(const CliffordSet& set, const NoisyChannel& pulse_channel) {
  const ComplexMatrix pulse = superoperator(pulse_channel);
  NoisyCliffordModel m;
  m.dim = set.encoding.dim.d();
  for (const auto& g : set.gates) m.cliffords.push_back(program_superoperator(g.program, pulse));
  m.encoder = program_superoperator(set.encoding.encoder, pulse);
  m.decoder = program_superoperator(inverse_program(set.encoding.encoder), pulse);
  return m;
}

/// Runs RB: |0> -> encoder -> m random Cliffords -> exact inverse -> decoder,
/// survival = <0|rho|0>. Each (length, sequence) pair draws from its own
/// split stream.
inline RbResult run_rb(const NoisyCliffordModel& model, const RbOptions& options = {}) {
  if (options.lengths.empty()) throw std::invalid_argument("run_rb: lengths must be nonempty");
  if (options.sequences < 1) throw std::invalid_argument("run_rb: need at least one sequence");
  for (int m : options.lengths)
    if (m < 0) throw std::invalid_argument("run_rb: lengths must be non-negative");
  const int d = model.dim;
  const auto& table = clifford_table();
  const Rng root(options.seed);
  const int nl = static_cast<int>(options.lengths.size());
  std::vector<double> surv(static_cast<size_t>(nl * options.sequences)), drift(surv.size(), 0.0);

  ComplexVector start = ComplexVector::Zero(d * d);
  start(0) = 1.0;
  parallel_for(nl * options.sequences, options.threads, [&](int task) {
    const int li = task / options.sequences;
    Rng rng = root.split(static_cast<std::uint64_t>(task));
    ComplexVector rho = model.encoder * start;
    int net = 0;
    double worst = 0.0;
    auto track = [&] {
      Complex tr = 0.0;
      for (int k = 0; k < d; ++k) tr += rho(k * d + k);
      worst = std::max(worst, std::abs(tr - 1.0));
    };
    for (int s = 0; s < options.lengths[static_cast<size_t>(li)]; ++s) {
      const int c = rng.uniform_int(0, 23);
      rho = model.cliffords[static_cast<size_t>(c)] * rho;
      net = table.product[static_cast<size_t>(c)][static_cast<size_t>(net)];
      track();
    }
    rho = model.cliffords[static_cast<size_t>(table.inverse[static_cast<size_t>(net)])] * rho;
    rho = model.decoder * rho;
    track();
    surv[static_cast<size_t>(task)] = rho(0).real();
    drift[static_cast<size_t>(task)] = worst;
  });

  RbResult res;
  res.lengths = options.lengths;
  for (int li = 0; li < nl; ++li) {
    double mean = 0.0, sq = 0.0;
    for (int s = 0; s < options.sequences; ++s) mean += surv[static_cast<size_t>(li * options.sequences + s)];
    mean /= options.sequences;
    for (int s = 0; s < options.sequences; ++s) sq += std::pow(surv[static_cast<size_t>(li * options.sequences + s)] - mean, 2);
    res.survival.push_back(mean);
    res.survival_error.push_back(options.sequences > 1 ? std::sqrt(sq / (options.sequences - 1) / options.sequences) : 0.0);
  }
  for (double w : drift) res.trace_drift = std::max(res.trace_drift, w);
  if (res.lengths.size() >= 3) {
    res.fit = fit_rb_decay(res.lengths, res.survival);
  } else {
    res.fit.ok = false;
    res.fit.message = "fewer than three lengths";
  }
  return res;
}

/// F_D = F_RB^{1/N}.
inline double fd_from_frb(double f_rb, double pulses_per_clifford = 5.0 / 3.0) {
  if (!(f_rb > 0.0 && f_rb <= 1.0)) throw std::invalid_argument("fd_from_frb: F_RB must lie in (0, 1]");
  if (!(pulses_per_clifford > 0.0)) throw std::invalid_argument("fd_from_frb: N must be positive");
  return std::pow(f_rb, 1.0 / pulses_per_clifford);
}

struct RelationRow {
  int d = 0;
  double q = 0.0;
  int randomization = 0;
  double f_d = 0.0;
  double f_rb = 0.0;
  double p = 1.0;
  double r_squared = 1.0;
  double model_fd = 0.0;    // F_RB^{1/N} with the compiled N
  double model_fd_53 = 0.0;  // F_RB^{3/5}
};

struct RelationOptions {
  std::vector<double> q_grid{0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1};
  int randomizations = 10;
  RbOptions rb;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct RelationReport {
  int d = 0;
  double pulses_per_clifford = 0.0;
  std::vector<RelationRow> rows;
  double max_deviation = 0.0;     // max |F_D - F_RB^{1/N}|
  double max_deviation_53 = 0.0;  // same with N = 5/3
};

/// Simulates RB for perturbed pi/2 displacements over a grid of error weights
/// and channel randomizations, and compares the true displacement fidelity
/// with the power-law prediction from the fitted Clifford fidelity.
inline RelationReport validate_relation(const CliffordSet& set, const RelationOptions& options = {}) {
  const SpinDimension dim = set.encoding.dim;
  const ComplexMatrix pulse = displacement(dim, kPi / 2, 0.0);
  RelationReport rep;
  rep.d = dim.d();
  rep.pulses_per_clifford = set.average_pulses();
  const Rng root(options.seed);
  const int nq = static_cast<int>(options.q_grid.size());
  rep.rows.resize(static_cast<size_t>(nq * options.randomizations));
  parallel_for(nq * options.randomizations, options.threads, [&](int task) {
    const int qi = task / options.randomizations, ri = task % options.randomizations;
    const double q = options.q_grid[static_cast<size_t>(qi)];
    const NoisyChannel a = random_cptp_map(dim.d(), root.split(static_cast<std::uint64_t>(ri)).seed());
    const NoisyChannel noisy = perturbed_unitary(pulse, a, q);
    RbOptions rb = options.rb;
    rb.threads = 1;
    rb.seed = root.split(1000003ULL + static_cast<std::uint64_t>(task)).seed();
    const RbResult r = run_rb(build_noisy_model(set, noisy), rb);
    RelationRow row;
    row.d = dim.d();
    row.q = q;
    row.randomization = ri;
    row.f_d = average_gate_fidelity(noisy, pulse);
    row.p = r.fit.p;
    row.r_squared = r.fit.r_squared;
    row.f_rb = r.fit.f_rb();
    row.model_fd = fd_from_frb(row.f_rb, rep.pulses_per_clifford);
    row.model_fd_53 = fd_from_frb(row.f_rb);
    rep.rows[static_cast<size_t>(task)] = row;
  });
  for (const auto& row : rep.rows) {
    rep.max_deviation = std::max(rep.max_deviation, std::abs(row.f_d - row.model_fd));
    rep.max_deviation_53 = std::max(rep.max_deviation_53, std::abs(row.f_d - row.model_fd_53));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Coherent plus incoherent error model, 1 - F = a_s / T^2 + b T

struct ErrorModelFit {
  std::vector<double> coherent;  // a_s per series, ns^2
  double incoherent_rate = 0.0;  // b, 1/ns
  double residual_norm = 0.0;

  /// Duration minimising a/T^2 + b T for series s.
  double optimal_duration(int s) const { return std::cbrt(2.0 * coherent.at(static_cast<size_t>(s)) / incoherent_rate); }
};

struct DurationPoint {
  double duration = 0.0;  // ns
  double fidelity = 0.0;
};

/// Linear least squares with one coherent coefficient per series and a shared
/// incoherent rate.
inline ErrorModelFit fit_error_model(const std::vector<std::vector<DurationPoint>>& series) {
  int rows = 0;
  for (const auto& s : series) rows += static_cast<int>(s.size());
  const int cols = static_cast<int>(series.size()) + 1;
  if (series.empty() || rows < 3) throw std::invalid_argument("fit_error_model: need at least three durations");
  RealMatrix x = RealMatrix::Zero(rows, cols);
  RealVector y(rows);
  int r = 0;
  for (int s = 0; s < static_cast<int>(series.size()); ++s) {
    for (const auto& p : series[static_cast<size_t>(s)]) {
      if (!(p.duration > 0.0)) throw std::invalid_argument("fit_error_model: durations must be positive");
      x(r, s) = 1.0 / (p.duration * p.duration);
      x(r, cols - 1) = p.duration;
      y(r) = 1.0 - p.fidelity;
      ++r;
    }
  }
  Eigen::ColPivHouseholderQR<RealMatrix> qr(x);
  if (qr.rank() < cols) throw NumericalError("fit_error_model: degenerate design (need distinct durations)");
  const RealVector c = qr.solve(y);
  ErrorModelFit fit;
  for (int s = 0; s + 1 < cols; ++s) fit.coherent.push_back(c(s));
  fit.incoherent_rate = c(cols - 1);
  fit.residual_norm = (x * c - y).norm();
  return fit;
}

}  // namespace quditkit
