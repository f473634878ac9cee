#include "quditkit/readout.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace quditkit;

namespace {

// Resonances spread over several linewidths: well separated at small sigma.
ResonatorModel spread_model(int d, double sigma) {
  ResonatorModel m;
  m.d = d;
  m.kappa_mhz = 0.5;
  for (int n = 0; n < d; ++n) m.chi_mhz.push_back(-0.6 * n);
  choose_tones(m);
  m.sigma = sigma;
  return m;
}

double pair_fidelity(const AssignmentMatrix& a, int i, int j) { return 0.5 * (a.p(i, i) + a.p(j, j)); }

}  // namespace

TEST(Resonator, DispersiveShiftsMatchPerturbationTheory) {
  const std::vector<double> f{5.0, 4.8};
  const auto chi = dispersive_shifts(f, 6.0, 0.05);
  EXPECT_NEAR(chi[0], 1e3 * 0.0025 / 1.0, 1e-12);
  EXPECT_NEAR(chi[1], 1e3 * (0.0025 * 2 / 1.2 - 0.0025 / 1.0), 1e-12);
  const auto m = synthetic_resonator(8);
  EXPECT_EQ(m.chi_mhz.size(), 8u);
  for (int n = 1; n < 8; ++n) EXPECT_LT(m.chi_mhz[static_cast<size_t>(n)], m.chi_mhz[static_cast<size_t>(n - 1)]);
}

TEST(Resonator, LorentzianResponse) {
  ResonatorModel m = spread_model(3, 0.0);
  m.tones = {m.resonance(1), m.resonance(1) + 0.5e-3 * m.kappa_mhz, 6.5};
  EXPECT_NEAR(std::abs(m.response(1, 0) - Complex(1.0, 0.0)), 0.0, 1e-9);
  // half a linewidth away: |S21|^2 = 1/2
  EXPECT_NEAR(std::norm(m.response(1, 1)), 0.5, 1e-9);
}

TEST(SimulateIq, ZeroNoiseGivesTheMean) {
  const ResonatorModel m = spread_model(4, 0.0);
  const auto data = simulate_iq(m, 2, 20, 1);
  for (int s = 0; s < 20; ++s) EXPECT_EQ((data.samples.row(s).transpose() - m.mean_vector(2)).norm(), 0.0);
  EXPECT_THROW(simulate_iq(m, 4, 1, 1), std::invalid_argument);
  EXPECT_THROW(simulate_iq(m, 0, 0, 1), std::invalid_argument);
}

TEST(SimulateIq, EqualShiftsCoincide) {
  ResonatorModel m = spread_model(4, 0.0);
  m.chi_mhz[2] = m.chi_mhz[1];
  EXPECT_EQ((m.mean_vector(1) - m.mean_vector(2)).norm(), 0.0);
  EXPECT_GT((m.mean_vector(0) - m.mean_vector(1)).norm(), 0.01);
}

TEST(SimulateIq, DefaultSpectrumSeparatesEightStates) {
  ResonatorModel m = synthetic_resonator(8);
  m.sigma = 0.1;
  const auto data = simulate_calibration(m, 400, 5);
  std::vector<Eigen::VectorXd> mu(8, Eigen::VectorXd::Zero(6));
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(6, 6);
  for (int i = 0; i < data.size(); ++i) mu[static_cast<size_t>(data.labels[static_cast<size_t>(i)])] += data.samples.row(i).transpose() / 400.0;
  for (int i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd r = data.samples.row(i).transpose() - mu[static_cast<size_t>(data.labels[static_cast<size_t>(i)])];
    pooled += r * r.transpose() / data.size();
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(pooled);
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b) {
      const Eigen::VectorXd z = llt.matrixL().solve(mu[static_cast<size_t>(a)] - mu[static_cast<size_t>(b)]);
      EXPECT_GT(z.norm(), 2.0) << a << " " << b;
    }
}

TEST(SimulateIq, PopulationsDrawLevelsInProportion) {
  const ResonatorModel m = spread_model(4, 0.05);
  Eigen::VectorXd p(4);
  p << 0.5, 0.3, 0.2, 0.0;
  const int shots = 20000;
  const auto data = simulate_populations(m, p, shots, 3);
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(4);
  std::vector<Eigen::VectorXd> mu(4, Eigen::VectorXd::Zero(6));
  for (int i = 0; i < shots; ++i) {
    const int n = data.labels[static_cast<size_t>(i)];
    freq(n) += 1.0;
    mu[static_cast<size_t>(n)] += data.samples.row(i).transpose();
  }
  EXPECT_EQ(freq(3), 0.0);
  for (int n = 0; n < 3; ++n) {
    EXPECT_NEAR(freq(n) / shots, p(n), 4.0 * std::sqrt(p(n) * (1 - p(n)) / shots)) << n;
    const Eigen::VectorXd err = mu[static_cast<size_t>(n)] / freq(n) - m.mean_vector(n);
    EXPECT_LT(err.cwiseAbs().maxCoeff(), 4.0 * m.sigma / std::sqrt(freq(n))) << n;
  }
  EXPECT_THROW(simulate_populations(m, Eigen::VectorXd::Constant(4, 0.3), 10, 1), std::invalid_argument);
}

TEST(Gmm, RecoversSeparatedMeans) {
  const ResonatorModel m = spread_model(4, 0.02);
  const int shots = 500;
  const auto data = simulate_calibration(m, shots, 9);
  const auto g = fit_gmm(data, 4, {.seed = 1});
  EXPECT_TRUE(g.converged);
  for (int c = 0; c < 4; ++c) {
    const int s = g.state_of[static_cast<size_t>(c)];
    const Eigen::VectorXd err = g.means[static_cast<size_t>(c)] - m.mean_vector(s);
    EXPECT_LT(err.lpNorm<Eigen::Infinity>(), 3.0 * m.sigma / std::sqrt(shots)) << c;
  }
  std::vector<int> states = g.state_of;
  std::sort(states.begin(), states.end());
  EXPECT_EQ(states, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_THROW(fit_gmm(simulate_iq(m, 0, 100, 1), 4), std::invalid_argument);
}

TEST(Gmm, ShotOrderDoesNotMatter) {
  const ResonatorModel m = spread_model(3, 0.15);
  const auto data = simulate_calibration(m, 300, 4);
  IqDataset shuffled = data;
  std::vector<int> perm(static_cast<size_t>(data.size()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), Rng(77).engine());
  for (size_t i = 0; i < perm.size(); ++i) {
    shuffled.samples.row(static_cast<Eigen::Index>(i)) = data.samples.row(perm[i]);
    shuffled.labels[i] = data.labels[static_cast<size_t>(perm[i])];
  }
  const auto a = fit_gmm(data, 3, {.seed = 2});
  const auto b = fit_gmm(shuffled, 3, {.seed = 2});
  EXPECT_EQ(a.state_of, b.state_of);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(a.means[static_cast<size_t>(c)], b.means[static_cast<size_t>(c)]);
    EXPECT_EQ(a.covariances[static_cast<size_t>(c)], b.covariances[static_cast<size_t>(c)]);
  }
}

TEST(Gmm, AffineEquivariance) {
  const ResonatorModel m = spread_model(4, 0.08);
  const auto data = simulate_calibration(m, 400, 6);
  // random rotation plus offset
  Rng rng(8);
  Eigen::MatrixXd r(6, 6);
  for (int i = 0; i < 36; ++i) r(i / 6, i % 6) = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(r).householderQ();
  IqDataset moved = data;
  moved.samples = (data.samples * q.transpose()).rowwise() + Eigen::RowVectorXd::Constant(6, 3.0);
  const auto a = fit_gmm(data, 4, {.seed = 3});
  const auto b = fit_gmm(moved, 4, {.seed = 3});
  const auto fresh = simulate_calibration(m, 200, 60);
  IqDataset fresh_moved = fresh;
  fresh_moved.samples = (fresh.samples * q.transpose()).rowwise() + Eigen::RowVectorXd::Constant(6, 3.0);
  EXPECT_EQ(classify(a, fresh.samples), classify(b, fresh_moved.samples));
}

TEST(Assignment, SeparatedClustersGiveIdentity) {
  const ResonatorModel m = spread_model(4, 1e-4);
  const auto g = fit_gmm(simulate_calibration(m, 200, 1), 4, {.seed = 1});
  const auto a = assignment_matrix(g, simulate_calibration(m, 200, 2), 4);
  EXPECT_LT((a.p - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_DOUBLE_EQ(a.average_fidelity(), 1.0);
}

TEST(Assignment, ColumnStochasticAndMonotoneInNoise) {
  double previous = 1.0;
  for (double sigma : {0.05, 0.1, 0.2, 0.3}) {
    const ResonatorModel m = spread_model(4, sigma);
    const auto g = fit_gmm(simulate_calibration(m, 500, 10), 4, {.seed = 5});
    const auto a = assignment_matrix(g, simulate_calibration(m, 2000, 11), 4);
    for (int n = 0; n < 4; ++n) EXPECT_NEAR(a.p.col(n).sum(), 1.0, 1e-9);
    EXPECT_LE(a.average_fidelity(), previous + 1e-3) << sigma;
    previous = a.average_fidelity();
  }
  EXPECT_LT(previous, 0.95);
}

TEST(Assignment, MergingClustersApproachesCoinFlip) {
  std::vector<double> fid;
  for (double gap : {0.6, 0.3, 0.1, 0.0}) {
    ResonatorModel m = spread_model(3, 0.05);
    m.chi_mhz[1] = m.chi_mhz[0] - gap;
    const auto g = fit_gmm(simulate_calibration(m, 600, 20), 3, {.seed = 4});
    fid.push_back(pair_fidelity(assignment_matrix(g, simulate_calibration(m, 2000, 21), 3), 0, 1));
  }
  for (size_t i = 1; i < fid.size(); ++i) EXPECT_LT(fid[i], fid[i - 1] + 1e-3);
  EXPECT_GT(fid.front(), 0.99);
  EXPECT_NEAR(fid.back(), 0.5, 0.05);
}

TEST(Assignment, TrainedTuningHitsTargetWithFreshShots) {
  ResonatorModel m = synthetic_resonator(4);
  const auto t = tune_noise_trained(m, 0.9, 500, 2000, 3, {.seed = 1});
  EXPECT_NEAR(t.fidelity, 0.9, 1e-3);
  EXPECT_NEAR(m.sigma, t.sigma, 0.0);
  // independent training and scoring shots
  EXPECT_NEAR(trained_assignment_fidelity(m, 500, 5000, 99, {.seed = 2}), 0.9, 0.01);
}

TEST(Assignment, TunedNoiseHitsTargetFidelity) {
  ResonatorModel m = synthetic_resonator(4);
  const auto t = tune_noise(m, 0.9, 3000, 3);
  EXPECT_NEAR(t.fidelity, 0.9, 1e-3);
  EXPECT_NEAR(m.sigma, t.sigma, 0.0);
  const auto g = fit_gmm(simulate_calibration(m, 3000, 4), 4, {.seed = 6});
  const auto a = assignment_matrix(g, simulate_calibration(m, 3000, 5), 4);
  EXPECT_NEAR(a.average_fidelity(), 0.9, 0.01);
  // the largest off-diagonal entry of every column is a neighbour
  for (int n = 0; n < 4; ++n) {
    Eigen::VectorXd col = a.p.col(n);
    col(n) = -1.0;
    Eigen::Index top = 0;
    col.maxCoeff(&top);
    EXPECT_EQ(std::abs(static_cast<int>(top) - n), 1) << n;
  }
}

TEST(Assignment, BinomialErrorOnAverageFidelity) {
  // eight states at about 88 % with 5000 shots each
  AssignmentMatrix a{Eigen::MatrixXd::Identity(8, 8) * 0.883};
  EXPECT_NEAR(average_fidelity_standard_error(a, 5000), 0.002, 5e-4);
}

TEST(Correction, IdentityAndNoiselessRoundTrip) {
  const AssignmentMatrix eye{Eigen::MatrixXd::Identity(5, 5)};
  Eigen::VectorXd raw(5);
  raw << 0.1, 0.2, 0.3, 0.25, 0.15;
  EXPECT_LT((correct_populations(raw, eye).p - raw).norm(), 1e-14);

  const ResonatorModel m = spread_model(5, 0.25);
  const auto g = fit_gmm(simulate_calibration(m, 500, 1), 5, {.seed = 1});
  const auto a = assignment_matrix(g, simulate_calibration(m, 2000, 2), 5);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd p(5);
    for (int i = 0; i < 5; ++i) p(i) = -std::log(rng.uniform(1e-12, 1.0));
    p /= p.sum();
    if (trial == 0) p << 0.0, 0.5, 0.0, 0.5, 0.0;  // on the boundary of the simplex
    const auto est = correct_populations(a.p * p, a);
    EXPECT_LT((est.p - p).lpNorm<Eigen::Infinity>(), 1e-8) << trial;
    EXPECT_NEAR(est.p.sum(), 1.0, 1e-12);
    EXPECT_GE(est.p.minCoeff(), 0.0);
  }
  EXPECT_THROW(correct_populations(raw, AssignmentMatrix{Eigen::MatrixXd::Ones(5, 5) / 5.0}), NumericalError);
}

TEST(Correction, ConstrainedSolutionStaysOnSimplex) {
  // raw outside the image of A: unconstrained inversion would go negative
  Eigen::MatrixXd p(2, 2);
  p << 0.9, 0.2, 0.1, 0.8;
  Eigen::VectorXd raw(2);
  raw << 0.95, 0.05;
  const auto est = correct_populations(raw, AssignmentMatrix{p});
  EXPECT_LT((p.inverse() * raw)(1), 0.0);
  EXPECT_NEAR(est.p(0), 1.0, 1e-12);
  EXPECT_NEAR(est.p(1), 0.0, 1e-12);
}

TEST(Correction, ShotNoiseCoverage) {
  const ResonatorModel m = spread_model(4, 0.25);
  const auto g = fit_gmm(simulate_calibration(m, 1000, 1), 4, {.seed = 1});
  const auto a = assignment_matrix(g, simulate_calibration(m, 5000, 2), 4);
  const int shots = 5000, trials = 300;
  Rng rng(12);
  int inside = 0, total = 0;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd p(4);
    for (int i = 0; i < 4; ++i) p(i) = 0.05 - std::log(rng.uniform(1e-12, 1.0));
    p /= p.sum();
    const Eigen::VectorXd q = a.p * p;
    std::discrete_distribution<int> outcome(q.data(), q.data() + q.size());
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(4);
    for (int s = 0; s < shots; ++s) raw(outcome(rng.engine())) += 1.0;
    raw /= static_cast<double>(shots);
    const Eigen::VectorXd est = correct_populations(raw, a).p;
    const Eigen::VectorXd se = corrected_standard_errors(a, p, shots);
    for (int i = 0; i < 4; ++i) {
      inside += std::abs(est(i) - p(i)) <= 3.0 * se(i) ? 1 : 0;
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(inside) / total, 0.99);
}

TEST(Correction, CalibrationErrorPropagation) {
  // Monte Carlo over both the calibration columns and the raw outcomes,
  // drawn directly from a known assignment matrix
  Eigen::MatrixXd truth(3, 3);
  truth << 0.85, 0.10, 0.02, 0.12, 0.80, 0.13, 0.03, 0.10, 0.85;
  const Eigen::VectorXd p = Eigen::Vector3d(0.5, 0.3, 0.2);
  const int shots = 2000, cal = 1000, reps = 4000;
  Rng rng(5);
  auto draw = [&](const Eigen::VectorXd& q, int n) {
    std::discrete_distribution<int> outcome(q.data(), q.data() + q.size());
    Eigen::VectorXd f = Eigen::VectorXd::Zero(q.size());
    for (int s = 0; s < n; ++s) f(outcome(rng.engine())) += 1.0;
    return Eigen::VectorXd(f / n);
  };
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3), sq = Eigen::VectorXd::Zero(3);
  for (int r = 0; r < reps; ++r) {
    Eigen::MatrixXd est_a(3, 3);
    for (int n = 0; n < 3; ++n) est_a.col(n) = draw(truth.col(n), cal);
    const Eigen::VectorXd e = est_a.inverse() * draw(truth * p, shots);
    sum += e;
    sq += e.cwiseProduct(e);
  }
  const Eigen::VectorXd mc = (sq / reps - (sum / reps).cwiseProduct(sum / reps)).cwiseSqrt();
  const Eigen::VectorXd with = corrected_standard_errors({truth}, p, shots, cal);
  const Eigen::VectorXd without = corrected_standard_errors({truth}, p, shots);
  for (int i = 0; i < 3; ++i) {
    // 4000 replicas: relative error of a standard deviation ~ 1 / sqrt(2 reps)
    EXPECT_NEAR(with(i) / mc(i), 1.0, 0.05) << i;
    EXPECT_GT(with(i), without(i));
  }
}
