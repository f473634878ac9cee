#pragma once

#include "quditkit/core.hpp"
#include "quditkit/parallel.hpp"
#include "quditkit/transmon.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <vector>

namespace quditkit {

inline constexpr int kReadoutTones = 3;
inline constexpr int kReadoutFeatures = 2 * kReadoutTones;

/// Steady-state dispersive readout. The resonator sits at f_r + chi_n when the
/// transmon is in |n>; each tone reports gain * S21 as an (I, Q) pair.
struct ResonatorModel {
  int d = 8;
  double f_r = 6.410;              // GHz
  double kappa_mhz = 0.1;          // FWHM linewidth
  std::vector<double> chi_mhz;     // effective shift per state
  std::array<double, kReadoutTones> tones{6.4103, 6.4104, 6.4105};  // GHz
  double gain = 1.0;
  double sigma = 0.05;             // per-quadrature noise

  void validate() const {
    if (d < 2) throw ConfigError("readout: d must be >= 2");
    if (static_cast<int>(chi_mhz.size()) != d) throw ConfigError("readout: need one shift per state");
    if (!(kappa_mhz > 0.0)) throw ConfigError("readout: kappa must be positive");
    if (!(gain > 0.0)) throw ConfigError("readout: gain must be positive");
    if (!(sigma >= 0.0)) throw ConfigError("readout: sigma must be >= 0");
    for (double x : chi_mhz)
      if (!std::isfinite(x)) throw ConfigError("readout: shifts must be finite");
  }

  double resonance(int n) const { return f_r + 1e-3 * chi_mhz.at(static_cast<size_t>(n)); }

  /// Lorentzian transmission 1 / (1 + 2i (f - f_n) / kappa), scaled by gain.
  Complex response(int n, int tone) const {
    const double detuning_mhz = 1e3 * (tones.at(static_cast<size_t>(tone)) - resonance(n));
    return gain / Complex(1.0, 2.0 * detuning_mhz / kappa_mhz);
  }

  Eigen::VectorXd mean_vector(int n) const {
    Eigen::VectorXd m(kReadoutFeatures);
    for (int k = 0; k < kReadoutTones; ++k) {
      const Complex s = response(n, k);
      m(2 * k) = s.real();
      m(2 * k + 1) = s.imag();
    }
    return m;
  }
};

/// Second-order dispersive shifts with harmonic-oscillator matrix elements:
/// chi_n = g^2 [(n+1) / (f_r - f_{n,n+1}) - n / (f_r - f_{n-1,n})], in MHz.
inline std::vector<double> dispersive_shifts(const std::vector<double>& transitions, double f_r, double g) {
  std::vector<double> chi;
  for (size_t n = 0; n < transitions.size(); ++n) {
    double s = g * g * static_cast<double>(n + 1) / (f_r - transitions[n]);
    if (n > 0) s -= g * g * static_cast<double>(n) / (f_r - transitions[n - 1]);
    chi.push_back(1e3 * s);
  }
  return chi;
}

/// Smallest pairwise distance between the noiseless state responses.
inline double min_separation(const ResonatorModel& model) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<Eigen::VectorXd> means;
  for (int n = 0; n < model.d; ++n) means.push_back(model.mean_vector(n));
  for (int a = 0; a < model.d; ++a)
    for (int b = a + 1; b < model.d; ++b) best = std::min(best, (means[static_cast<size_t>(a)] - means[static_cast<size_t>(b)]).norm());
  return best;
}

/// Picks the three tones maximising min_separation over a uniform grid that
/// spans the shifted resonances plus two linewidths on either side.
inline void choose_tones(ResonatorModel& model, int grid_points = 25) {
  model.validate();
  if (grid_points < kReadoutTones) throw ConfigError("readout: tone grid too small");
  double lo = model.resonance(0), hi = lo;
  for (int n = 1; n < model.d; ++n) {
    lo = std::min(lo, model.resonance(n));
    hi = std::max(hi, model.resonance(n));
  }
  lo -= 2e-3 * model.kappa_mhz;
  hi += 2e-3 * model.kappa_mhz;
  std::vector<double> grid(static_cast<size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i) grid[static_cast<size_t>(i)] = lo + (hi - lo) * i / (grid_points - 1);
  double best = -1.0;
  auto best_tones = model.tones;
  ResonatorModel trial = model;
  for (int a = 0; a < grid_points; ++a)
    for (int b = a + 1; b < grid_points; ++b)
      for (int c = b + 1; c < grid_points; ++c) {
        trial.tones = {grid[static_cast<size_t>(a)], grid[static_cast<size_t>(b)], grid[static_cast<size_t>(c)]};
        const double s = min_separation(trial);
        if (s > best + 1e-15) {
          best = s;
          best_tones = trial.tones;
        }
      }
  model.tones = best_tones;
}

/// Synthetic spectrum for the reference device (f_r = 6.410 GHz, g = 28 MHz),
/// with tones from choose_tones. Shifts are synthetic: the device values are
/// not published.
inline ResonatorModel synthetic_resonator(int d, const TransmonSpec& device = reference_transmon(), double f_r = 6.410, double g = 0.028) {
  ResonatorModel m;
  m.d = d;
  m.f_r = f_r;
  m.chi_mhz = dispersive_shifts(transition_frequencies(device, d), f_r, g);
  choose_tones(m);
  return m;
}

// ---------------------------------------------------------------------------
// Shots

struct IqDataset {
  Eigen::MatrixXd samples;  // N x 6: I1 Q1 I2 Q2 I3 Q3
  std::vector<int> labels;  // prepared state per row

  int size() const { return static_cast<int>(samples.rows()); }
};

inline IqDataset simulate_iq(const ResonatorModel& model, int prepared, int shots, std::uint64_t seed) {
  model.validate();
  if (shots < 1) throw std::invalid_argument("simulate_iq: shots must be >= 1");
  if (prepared < 0 || prepared >= model.d) throw std::invalid_argument("simulate_iq: prepared state out of range");
  IqDataset out;
  out.samples.resize(shots, kReadoutFeatures);
  out.labels.assign(static_cast<size_t>(shots), prepared);
  const Eigen::VectorXd mean = model.mean_vector(prepared);
  Rng rng(seed);
  for (int s = 0; s < shots; ++s)
    for (int f = 0; f < kReadoutFeatures; ++f) out.samples(s, f) = mean(f) + model.sigma * rng.normal();
  return out;
}

/// `shots` per state, state n drawn from stream split(n) of `seed`.
inline IqDataset simulate_calibration(const ResonatorModel& model, int shots, std::uint64_t seed) {
  IqDataset all;
  all.samples.resize(static_cast<Eigen::Index>(model.d) * shots, kReadoutFeatures);
  const Rng root(seed);
  for (int n = 0; n < model.d; ++n) {
    const auto part = simulate_iq(model, n, shots, root.split(static_cast<std::uint64_t>(n)).seed());
    all.samples.middleRows(static_cast<Eigen::Index>(n) * shots, shots) = part.samples;
    all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
  }
  return all;
}

/// Shots of the mixed state diag(populations): each shot's level is drawn
/// first, then its IQ point. Labels hold the drawn level.
inline IqDataset simulate_populations(const ResonatorModel& model, const Eigen::VectorXd& populations, int shots, std::uint64_t seed) {
  model.validate();
  if (populations.size() != model.d) throw std::invalid_argument("simulate_populations: size mismatch");
  if (populations.minCoeff() < 0.0 || std::abs(populations.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("simulate_populations: populations must be a probability vector");
  if (shots < 1) throw std::invalid_argument("simulate_populations: shots must be >= 1");
  std::vector<Eigen::VectorXd> means;
  for (int n = 0; n < model.d; ++n) means.push_back(model.mean_vector(n));
  IqDataset out;
  out.samples.resize(shots, kReadoutFeatures);
  out.labels.resize(static_cast<size_t>(shots));
  Rng rng(seed);
  std::discrete_distribution<int> level(populations.data(), populations.data() + populations.size());
  for (int s = 0; s < shots; ++s) {
    const int n = level(rng.engine());
    out.labels[static_cast<size_t>(s)] = n;
    for (int f = 0; f < kReadoutFeatures; ++f) out.samples(s, f) = means[static_cast<size_t>(n)](f) + model.sigma * rng.normal();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian mixture

struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
  std::vector<int> state_of;  // component -> state
  double log_likelihood = 0.0;  // mean per sample
  int iterations = 0;
  bool converged = false;
  int regularized = 0;  // covariance repairs during EM

  int components() const { return static_cast<int>(weights.size()); }
};

struct GmmOptions {
  int max_iterations = 1000;
  double tolerance = 1e-8;  // on the mean log-likelihood gain
  int restarts = 4;
  std::uint64_t seed = 0;
};

namespace detail {

/// Per-component log N(x | mu, Sigma) for every row of x.
inline Eigen::MatrixXd component_log_densities(const Eigen::MatrixXd& x, const GaussianMixture& g) {
  const int k = g.components();
  const Eigen::Index dim = x.cols();
  const Eigen::MatrixXd xt = x.transpose();
  Eigen::MatrixXd out(x.rows(), k);
  for (int c = 0; c < k; ++c) {
    const Eigen::LLT<Eigen::MatrixXd> llt(g.covariances[static_cast<size_t>(c)]);
    const Eigen::MatrixXd l = llt.matrixL();
    const Eigen::MatrixXd l_inv = l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(dim, dim));
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const Eigen::MatrixXd z = (l_inv * xt).colwise() - l_inv * g.means[static_cast<size_t>(c)];
    out.col(c) = (-0.5 * (z.colwise().squaredNorm().array() + log_det + static_cast<double>(dim) * std::log(kTwoPi))).matrix().transpose();
  }
  return out;
}

/// Adds 1e-6 trace/dim to the diagonal when the Cholesky factor fails or the
/// covariance is numerically singular.
inline bool regularize(Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double tr = cov.trace();
  bool bad = llt.info() != Eigen::Success;
  if (!bad) {
    const Eigen::VectorXd diag = Eigen::MatrixXd(llt.matrixL()).diagonal();
    bad = diag.minCoeff() * diag.minCoeff() < 1e-12 * tr / static_cast<double>(cov.rows());
  }
  if (!bad) return false;
  const double eps = tr > 0.0 ? 1e-6 * tr / static_cast<double>(cov.rows()) : 1e-12;
  cov.diagonal().array() += eps;
  return true;
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance to the nearest chosen centre.
inline std::vector<Eigen::VectorXd> kmeans_plus_plus(const Eigen::MatrixXd& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  std::vector<Eigen::VectorXd> centres;
  centres.push_back(x.row(rng.uniform_int(0, static_cast<int>(n) - 1)).transpose());
  Eigen::VectorXd d2 = (x.rowwise() - centres[0].transpose()).rowwise().squaredNorm();
  while (static_cast<int>(centres.size()) < k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double r = rng.uniform(0.0, total), acc = 0.0;
      for (pick = 0; pick < n - 1; ++pick) {
        acc += d2(pick);
        if (acc >= r) break;
      }
    } else {
      pick = rng.uniform_int(0, static_cast<int>(n) - 1);
    }
    centres.push_back(x.row(pick).transpose());
    d2 = d2.cwiseMin((x.rowwise() - centres.back().transpose()).rowwise().squaredNorm());
  }
  return centres;
}

/// Index of the closest centre for every row.
inline std::vector<int> nearest_centre(const Eigen::MatrixXd& x, const std::vector<Eigen::VectorXd>& centres) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(centres.size()), x.cols());
  for (size_t k = 0; k < centres.size(); ++k) c.row(static_cast<Eigen::Index>(k)) = centres[k].transpose();
  const Eigen::MatrixXd d2 = (-2.0 * x * c.transpose()).rowwise() + c.rowwise().squaredNorm().transpose();
  std::vector<int> out(static_cast<size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index k = 0;
    d2.row(i).minCoeff(&k);
    out[static_cast<size_t>(i)] = static_cast<int>(k);
  }
  return out;
}

/// Lloyd iterations from the given centres.
inline std::vector<Eigen::VectorXd> lloyd(const Eigen::MatrixXd& x, std::vector<Eigen::VectorXd> centres, int iterations = 100) {
  const int k = static_cast<int>(centres.size());
  std::vector<int> owner(static_cast<size_t>(x.rows()), -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    const std::vector<int> nearest = nearest_centre(x, centres);
    for (size_t i = 0; i < nearest.size(); ++i) {
      if (owner[i] != nearest[i]) changed = true;
      owner[i] = nearest[i];
    }
    if (!changed) break;
    std::vector<Eigen::VectorXd> sum(static_cast<size_t>(k), Eigen::VectorXd::Zero(x.cols()));
    std::vector<int> count(static_cast<size_t>(k), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      sum[static_cast<size_t>(owner[static_cast<size_t>(i)])] += x.row(i).transpose();
      ++count[static_cast<size_t>(owner[static_cast<size_t>(i)])];
    }
    for (int c = 0; c < k; ++c)
      if (count[static_cast<size_t>(c)] > 0) centres[static_cast<size_t>(c)] = sum[static_cast<size_t>(c)] / count[static_cast<size_t>(c)];
  }
  return centres;
}

struct EmSettings {
  int max_iterations;
  double tolerance;
};

inline GaussianMixture run_em(const Eigen::MatrixXd& x, std::vector<Eigen::VectorXd> seeds, const EmSettings& options) {
  GaussianMixture g;
  g.means = std::move(seeds);
  const int components = static_cast<int>(g.means.size());
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = x.cols();
  g.weights.assign(static_cast<size_t>(components), 1.0 / components);
  Eigen::MatrixXd global = (x.rowwise() - x.colwise().mean()).transpose() * (x.rowwise() - x.colwise().mean()) / static_cast<double>(n);
  regularize(global);
  g.covariances.assign(static_cast<size_t>(components), global);

  // one hard assignment pass so the covariances start at cluster scale
  {
    const std::vector<int> nearest = nearest_centre(x, g.means);
    for (int c = 0; c < components; ++c) {
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
      int count = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (nearest[static_cast<size_t>(i)] != c) continue;
        const Eigen::VectorXd r = x.row(i).transpose() - g.means[static_cast<size_t>(c)];
        cov += r * r.transpose();
        ++count;
      }
      if (count > static_cast<int>(dim)) {
        cov /= count;
        regularize(cov);
        g.covariances[static_cast<size_t>(c)] = cov;
        g.weights[static_cast<size_t>(c)] = static_cast<double>(count) / static_cast<double>(n);
      }
    }
  }

  double previous = -std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd xt = x.transpose();
  Eigen::MatrixXd resp(n, components);
  for (g.iterations = 1; g.iterations <= options.max_iterations; ++g.iterations) {
    // E step
    Eigen::MatrixXd logp = component_log_densities(x, g);
    for (int c = 0; c < components; ++c) logp.col(c).array() += std::log(g.weights[static_cast<size_t>(c)]);
    const Eigen::VectorXd top = logp.rowwise().maxCoeff();
    const Eigen::ArrayXXd e = (logp.colwise() - top).array().exp();
    const Eigen::ArrayXd total = e.rowwise().sum();
    const double ll = (top.array() + total.log()).mean();
    resp = (e.colwise() / total).matrix();
    g.log_likelihood = ll;
    if (ll - previous < options.tolerance) {
      g.converged = true;
      break;
    }
    previous = ll;

    // M step
    for (int c = 0; c < components; ++c) {
      const double nk = resp.col(c).sum();
      const size_t cs = static_cast<size_t>(c);
      if (nk < 1e-12) {
        ++g.regularized;
        g.weights[cs] = 1e-12;
        continue;
      }
      g.weights[cs] = nk / static_cast<double>(n);
      g.means[cs] = (xt * resp.col(c)) / nk;
      const Eigen::MatrixXd centred = xt.colwise() - g.means[cs];
      Eigen::MatrixXd cov = (centred.array().rowwise() * resp.col(c).array().transpose()).matrix() * centred.transpose() / nk;
      if (regularize(cov)) ++g.regularized;
      g.covariances[cs] = cov;
    }
  }
  g.iterations = std::min(g.iterations, options.max_iterations);

  return g;
}

}  // namespace detail

/// EM with full covariances from the best of several k-means++ / Lloyd
/// seeds, plus the labelled state means when labels cover every component.
/// Components are mapped to states by maximising the number of labelled rows
/// whose majority component agrees (an exact assignment for d <= 9, greedy
/// above).
inline GaussianMixture fit_gmm(const IqDataset& input, int components, const GmmOptions& options = {}) {
  // rows in lexicographic order, so the fit does not depend on shot order
  std::vector<Eigen::Index> order(static_cast<size_t>(input.samples.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index f = 0; f < input.samples.cols(); ++f) {
      if (input.samples(a, f) != input.samples(b, f)) return input.samples(a, f) < input.samples(b, f);
    }
    return a < b;
  });
  IqDataset data;
  data.samples.resize(input.samples.rows(), input.samples.cols());
  for (size_t i = 0; i < order.size(); ++i) {
    data.samples.row(static_cast<Eigen::Index>(i)) = input.samples.row(order[i]);
    if (input.labels.size() == order.size()) data.labels.push_back(input.labels[static_cast<size_t>(order[i])]);
  }
  const Eigen::MatrixXd& x = data.samples;
  const Eigen::Index n = x.rows();
  if (components < 1) throw std::invalid_argument("fit_gmm: need at least one component");
  if (n < 50 * components) throw std::invalid_argument("fit_gmm: need at least 50 samples per component");
  if (!x.allFinite()) throw std::invalid_argument("fit_gmm: samples must be finite");

  // k-means++ seeding refined by Lloyd, several restarts, best likelihood kept
  const Rng root(options.seed);
  GaussianMixture g;
  g.log_likelihood = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    Rng rng = root.split(static_cast<std::uint64_t>(r));
    auto seeds = detail::lloyd(x, detail::kmeans_plus_plus(x, components, rng));
    GaussianMixture trial = detail::run_em(x, std::move(seeds), {options.max_iterations, options.tolerance});
    if (trial.log_likelihood > g.log_likelihood) g = std::move(trial);
  }
  int states = 0;
  for (int l : data.labels) states = std::max(states, l + 1);
  // one more start from the labelled per-state means
  if (static_cast<Eigen::Index>(data.labels.size()) == n && states == components) {
    std::vector<Eigen::VectorXd> seeds(static_cast<size_t>(components), Eigen::VectorXd::Zero(x.cols()));
    std::vector<int> count(static_cast<size_t>(components), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto l = static_cast<size_t>(data.labels[static_cast<size_t>(i)]);
      seeds[l] += x.row(i).transpose();
      ++count[l];
    }
    if (std::all_of(count.begin(), count.end(), [](int c) { return c > 0; })) {
      for (size_t c = 0; c < seeds.size(); ++c) seeds[c] /= count[c];
      GaussianMixture trial = detail::run_em(x, std::move(seeds), {options.max_iterations, options.tolerance});
      if (trial.log_likelihood > g.log_likelihood) g = std::move(trial);
    }
  }

  // label matching
  g.state_of.assign(static_cast<size_t>(components), 0);
  if (static_cast<int>(data.labels.size()) != n || states == 0) {
    std::iota(g.state_of.begin(), g.state_of.end(), 0);
    return g;
  }
  Eigen::MatrixXd logp = detail::component_log_densities(x, g);
  Eigen::MatrixXi votes = Eigen::MatrixXi::Zero(components, states);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index c = 0;
    (logp.row(i).transpose().array() + Eigen::Map<const Eigen::ArrayXd>(g.weights.data(), components).log()).maxCoeff(&c);
    ++votes(c, data.labels[static_cast<size_t>(i)]);
  }
  if (components == states && components <= 9) {
    std::vector<int> perm(static_cast<size_t>(states));
    std::iota(perm.begin(), perm.end(), 0);
    long best = -1;
    do {
      long score = 0;
      for (int c = 0; c < components; ++c) score += votes(c, perm[static_cast<size_t>(c)]);
      if (score > best) {
        best = score;
        g.state_of = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    for (int c = 0; c < components; ++c) {
      Eigen::Index s = 0;
      votes.row(c).maxCoeff(&s);
      g.state_of[static_cast<size_t>(c)] = static_cast<int>(s);
    }
  }
  return g;
}

/// Maximum-posterior state for every row.
inline std::vector<int> classify(const GaussianMixture& g, const Eigen::MatrixXd& samples) {
  const Eigen::MatrixXd logp = detail::component_log_densities(samples, g);
  std::vector<int> out(static_cast<size_t>(samples.rows()));
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    Eigen::Index c = 0;
    (logp.row(i).transpose().array() + Eigen::Map<const Eigen::ArrayXd>(g.weights.data(), g.components()).log()).maxCoeff(&c);
    out[static_cast<size_t>(i)] = g.state_of[static_cast<size_t>(c)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assignment and correction

/// Column-stochastic P(assigned m | prepared n), stored as (m, n).
struct AssignmentMatrix {
  Eigen::MatrixXd p;

  int d() const { return static_cast<int>(p.rows()); }
  double average_fidelity() const { return p.diagonal().mean(); }
  double condition_number() const {
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(p);
    const auto s = svd.singularValues();
    return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
  }
};

/// Binomial standard error of the mean diagonal with `shots` per state.
inline double average_fidelity_standard_error(const AssignmentMatrix& a, int shots) {
  double var = 0.0;
  for (int n = 0; n < a.d(); ++n) var += a.p(n, n) * (1.0 - a.p(n, n)) / shots;
  return std::sqrt(var) / a.d();
}

inline AssignmentMatrix assignment_from_labels(const std::vector<int>& prepared, const std::vector<int>& assigned, int d) {
  if (prepared.size() != assigned.size()) throw std::invalid_argument("assignment: label count mismatch");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(d, d);
  for (size_t i = 0; i < prepared.size(); ++i) counts(assigned[i], prepared[i]) += 1.0;
  for (int n = 0; n < d; ++n) {
    const double total = counts.col(n).sum();
    if (total <= 0.0) throw std::invalid_argument("assignment: no shots for prepared state " + std::to_string(n));
    counts.col(n) /= total;
  }
  return {counts};
}

inline AssignmentMatrix assignment_matrix(const GaussianMixture& g, const IqDataset& calibration, int d) {
  return assignment_from_labels(calibration.labels, classify(g, calibration.samples), d);
}

/// Average fidelity of the ideal (nearest-mean) classifier, which is the Bayes
/// rule for equal isotropic noise and equal priors.
inline double ideal_assignment_fidelity(const ResonatorModel& model, int shots, std::uint64_t seed) {
  const auto data = simulate_calibration(model, shots, seed);
  std::vector<Eigen::VectorXd> means;
  for (int n = 0; n < model.d; ++n) means.push_back(model.mean_vector(n));
  std::vector<int> assigned(data.labels.size());
  for (Eigen::Index i = 0; i < data.samples.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int n = 0; n < model.d; ++n) {
      const double dd = (data.samples.row(i).transpose() - means[static_cast<size_t>(n)]).squaredNorm();
      if (dd < best) {
        best = dd;
        assigned[static_cast<size_t>(i)] = n;
      }
    }
  }
  return assignment_from_labels(data.labels, assigned, model.d).average_fidelity();
}

struct NoiseTuning {
  double sigma = 0.0;
  double fidelity = 0.0;
  int iterations = 0;
};

/// Bisection on sigma for a target ideal-classifier fidelity. The noise draws
/// are shared across sigma, so the fidelity is monotone in sigma (Voronoi
/// cells are convex).
inline NoiseTuning tune_noise(ResonatorModel& model, double target, int shots, std::uint64_t seed, double tolerance = 1e-4) {
  if (!(target > 1.0 / model.d && target < 1.0)) throw ConfigError("readout: target fidelity must lie in (1/d, 1)");
  double lo = 0.0, hi = min_separation(model);
  auto eval = [&](double s) {
    model.sigma = s;
    return ideal_assignment_fidelity(model, shots, seed);
  };
  while (eval(hi) > target) hi *= 2.0;
  NoiseTuning t;
  double f = 1.0;
  for (t.iterations = 0; t.iterations < 60; ++t.iterations) {
    const double mid = 0.5 * (lo + hi);
    f = eval(mid);
    if (std::abs(f - target) < tolerance) {
      lo = hi = mid;
      break;
    }
    (f > target ? lo : hi) = mid;
  }
  t.sigma = 0.5 * (lo + hi);
  t.fidelity = eval(t.sigma);
  return t;
}

/// Average fidelity of a GMM trained on `training_shots` per state and scored
/// on `shots` fresh shots per state.
inline double trained_assignment_fidelity(const ResonatorModel& model, int training_shots, int shots, std::uint64_t seed, const GmmOptions& gmm = {}) {
  const Rng root(seed);
  const auto mix = fit_gmm(simulate_calibration(model, training_shots, root.split(0).seed()), model.d, gmm);
  return assignment_matrix(mix, simulate_calibration(model, shots, root.split(1).seed()), model.d).average_fidelity();
}

/// Bisection on sigma for a target fidelity of the trained classifier, starting
/// from the ideal-classifier sigma as the upper bracket.
inline NoiseTuning tune_noise_trained(ResonatorModel& model, double target, int training_shots, int shots, std::uint64_t seed,
                                      const GmmOptions& gmm = {}, double tolerance = 1e-3) {
  double hi = tune_noise(model, target, shots, seed).sigma, lo = 0.0;
  auto eval = [&](double s) {
    model.sigma = s;
    return trained_assignment_fidelity(model, training_shots, shots, seed, gmm);
  };
  while (eval(hi) > target) hi *= 1.25;
  NoiseTuning t;
  double f = 1.0;
  for (t.iterations = 0; t.iterations < 40; ++t.iterations) {
    const double mid = 0.5 * (lo + hi);
    f = eval(mid);
    if (std::abs(f - target) < tolerance) {
      lo = hi = mid;
      break;
    }
    (f > target ? lo : hi) = mid;
  }
  t.sigma = 0.5 * (lo + hi);
  t.fidelity = eval(t.sigma);
  return t;
}

struct PopulationEstimate {
  Eigen::VectorXd p;
  double residual = 0.0;
  double condition_number = 0.0;
  int active_set_steps = 0;
};

/// min ||A p - raw||^2 subject to p >= 0, sum p = 1 (primal active set).
inline PopulationEstimate correct_populations(const Eigen::VectorXd& raw, const AssignmentMatrix& a) {
  const int d = a.d();
  if (raw.size() != d) throw std::invalid_argument("correct_populations: size mismatch");
  PopulationEstimate out;
  out.condition_number = a.condition_number();
  if (!std::isfinite(out.condition_number) || out.condition_number > 1e12) throw NumericalError("correct_populations: assignment matrix is singular");
  const Eigen::MatrixXd h = a.p.transpose() * a.p;
  const Eigen::VectorXd c = a.p.transpose() * raw;

  std::vector<bool> free(static_cast<size_t>(d), true);
  Eigen::VectorXd p = Eigen::VectorXd::Constant(d, 1.0 / d);
  auto solve_free = [&](double& lambda) {
    std::vector<int> idx;
    for (int i = 0; i < d; ++i)
      if (free[static_cast<size_t>(i)]) idx.push_back(i);
    const int m = static_cast<int>(idx.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 1, m + 1);
    Eigen::VectorXd rhs(m + 1);
    for (int r = 0; r < m; ++r) {
      for (int s = 0; s < m; ++s) kkt(r, s) = h(idx[static_cast<size_t>(r)], idx[static_cast<size_t>(s)]);
      kkt(r, m) = kkt(m, r) = 1.0;
      rhs(r) = c(idx[static_cast<size_t>(r)]);
    }
    rhs(m) = 1.0;
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
    for (int r = 0; r < m; ++r) z(idx[static_cast<size_t>(r)]) = sol(r);
    lambda = sol(m);
    return z;
  };

  for (int step = 0; step < 10 * d + 10; ++step) {
    out.active_set_steps = step + 1;
    double lambda = 0.0;
    const Eigen::VectorXd z = solve_free(lambda);
    bool feasible = true;
    for (int i = 0; i < d; ++i)
      if (free[static_cast<size_t>(i)] && z(i) < 0.0) feasible = false;
    if (feasible) {
      p = z;
      // multipliers of the bound constraints: grad_i - lambda must be >= 0
      const Eigen::VectorXd grad = h * p - c;
      int enter = -1;
      double worst = -1e-14;
      for (int i = 0; i < d; ++i)
        if (!free[static_cast<size_t>(i)] && grad(i) - lambda < worst) {
          worst = grad(i) - lambda;
          enter = i;
        }
      if (enter < 0) break;
      free[static_cast<size_t>(enter)] = true;
      continue;
    }
    double alpha = 1.0;
    int leave = -1;
    for (int i = 0; i < d; ++i) {
      if (!free[static_cast<size_t>(i)] || z(i) >= 0.0) continue;
      const double t = p(i) / (p(i) - z(i));
      if (t < alpha) {
        alpha = t;
        leave = i;
      }
    }
    p += alpha * (z - p);
    if (leave >= 0) {
      free[static_cast<size_t>(leave)] = false;
      p(leave) = 0.0;
    }
  }
  out.p = p.cwiseMax(0.0);
  out.p /= out.p.sum();
  out.residual = (a.p * out.p - raw).norm();
  return out;
}

/// Standard errors of the corrected populations from multinomial noise on
/// `shots` raw outcomes, propagated through A^{-1}. With calibration_shots > 0
/// the multinomial error of each estimated column of A (that many shots per
/// prepared state) is included to first order: dp = A^{-1} (dr - dA p).
inline Eigen::VectorXd corrected_standard_errors(const AssignmentMatrix& a, const Eigen::VectorXd& p_true, int shots, int calibration_shots = 0) {
  auto multinomial = [](const Eigen::VectorXd& q, double n) { return Eigen::MatrixXd((Eigen::MatrixXd(q.asDiagonal()) - q * q.transpose()) / n); };
  Eigen::MatrixXd cov = multinomial(a.p * p_true, shots);
  if (calibration_shots > 0)
    for (int n = 0; n < a.d(); ++n) cov += p_true(n) * p_true(n) * multinomial(a.p.col(n), calibration_shots);
  const Eigen::MatrixXd inv = a.p.inverse();
  return (inv * cov * inv.transpose()).diagonal().cwiseMax(0.0).cwiseSqrt();
}

}  // namespace quditkit
