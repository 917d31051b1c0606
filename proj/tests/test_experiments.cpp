#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "wsnd/experiments.hpp"

using namespace wsnd;

namespace {

Scenario small_scenario(int runs) {
  Scenario sc;
  sc.model.N = 4;
  sc.model.L = 10;
  sc.model.N0 = 1e-14;
  sc.model.seed = 77;
  sc.snr_db = -11.0;
  sc.runs = runs;
  return sc;
}

std::vector<double> normals(int n, double mu, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(mu, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(1000, 8, [&](int i) { hits[i].fetch_add(1); });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, PropagatesException) {
  EXPECT_THROW(parallel_for(100, 4,
                            [](int i) {
                              if (i == 37) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

TEST(MonteCarlo, DeterministicAndScheduleIndependent) {
  const Scenario sc = small_scenario(40);
  const MonteCarloResult a = run_monte_carlo(sc, 1);
  const MonteCarloResult b = run_monte_carlo(sc, 6);
  ASSERT_EQ(a.h0.size(), 40u);
  for (int i = 0; i < 40; ++i) {
    for (Detector d : kAllDetectors) {
      EXPECT_EQ(a.h0[i].value(d), b.h0[i].value(d));
      EXPECT_EQ(a.h1[i].value(d), b.h1[i].value(d));
    }
    EXPECT_EQ(a.theta1[i].theta, b.theta1[i].theta);
  }
}

TEST(MonteCarlo, SeedChangesOutcome) {
  Scenario sc = small_scenario(5);
  const MonteCarloResult a = run_monte_carlo(sc);
  sc.model.seed = 78;
  const MonteCarloResult b = run_monte_carlo(sc);
  EXPECT_NE(a.h0[0].md, b.h0[0].md);
}

TEST(MonteCarlo, FrozenTopologyKeepsFirstTrial) {
  Scenario sc = small_scenario(3);
  sc.freeze_topology = true;
  const MonteCarloResult r = run_monte_carlo(sc);
  // Fading and shadowing are still drawn per trial.
  for (int i = 1; i < 3; ++i) EXPECT_NE(r.theta1[i].theta, r.theta1[0].theta);
  // Trial 0 uses the same geometry stream either way.
  sc.freeze_topology = false;
  const MonteCarloResult u = run_monte_carlo(sc);
  EXPECT_EQ(u.theta1[0].theta, r.theta1[0].theta);
  EXPECT_NE(u.theta1[1].theta, r.theta1[1].theta);
}

TEST(MonteCarlo, NullMeanDetectorIsCentered) {
  Scenario sc = small_scenario(3000);
  sc.data_model = DataModel::GaussianApprox;
  const MonteCarloResult r = run_monte_carlo(sc, default_jobs());
  const std::vector<double> md = collect(r.h0, Detector::MD);
  double m = 0.0;
  for (double v : md) m += v;
  m /= md.size();
  EXPECT_NEAR(m, 0.0, 4.0 * std::sqrt(1.0 / 40.0 / 3000.0));
}

TEST(Collect, DropsNonConvergedGlrtOnly) {
  std::vector<DetectorSample> s(3);
  s[1].glrt_converged = false;
  s[0].glrt = 1.0;
  s[2].glrt = 3.0;
  EXPECT_EQ(collect(s, Detector::GLRT), (std::vector<double>{1.0, 3.0}));
  EXPECT_EQ(collect(s, Detector::LMP).size(), 3u);
  MonteCarloResult r;
  r.h0 = s;
  r.h1 = s;
  EXPECT_EQ(r.excluded_total(), 2);
}

TEST(EmpiricalCroc, ExtremesAndNaiveRecount) {
  const std::vector<double> h0 = normals(300, 0.0, 1);
  const std::vector<double> h1 = normals(200, 1.0, 2);
  const RocCurve c = empirical_croc(h0, h1);
  EXPECT_EQ(c.points.front().pfa, 1.0);
  EXPECT_EQ(c.points.front().pmd, 0.0);
  EXPECT_EQ(c.points.back().pfa, 0.0);
  EXPECT_EQ(c.points.back().pmd, 1.0);
  for (std::size_t k = 0; k < c.points.size(); k += 17) {
    const double t = c.points[k].threshold;
    int fa = 0, md = 0;
    for (double v : h0) fa += v > t;
    for (double v : h1) md += v <= t;
    EXPECT_DOUBLE_EQ(c.points[k].pfa, fa / 300.0);
    EXPECT_DOUBLE_EQ(c.points[k].pmd, md / 200.0);
  }
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    EXPECT_LE(c.points[k].pfa, c.points[k - 1].pfa);
    EXPECT_GE(c.points[k].pmd, c.points[k - 1].pmd);
    EXPECT_GT(c.points[k].threshold, c.points[k - 1].threshold);
  }
  EXPECT_THROW(empirical_croc({}, h1), ConfigError);
}

TEST(PmdAtPfa, HandCases) {
  const std::vector<double> h0{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const std::vector<double> h1{5.5, 9.5, 10.5, 11, 12};
  const PmdPoint p = pmd_at_pfa(h0, h1, 0.2);
  EXPECT_EQ(p.threshold, 8.0);
  EXPECT_DOUBLE_EQ(p.pfa, 0.2);
  EXPECT_DOUBLE_EQ(p.pmd, 0.2);
  const PmdPoint q = pmd_at_pfa(h0, h1, 0.25);
  EXPECT_EQ(q.threshold, 8.0);
  const PmdPoint r = pmd_at_pfa(h0, h1, 0.01);
  EXPECT_EQ(r.threshold, 10.0);
  EXPECT_EQ(r.pfa, 0.0);
  EXPECT_DOUBLE_EQ(r.pmd, 0.4);
  EXPECT_THROW(pmd_at_pfa(h0, h1, 1.0), ConfigError);
}

TEST(PmdAtPfa, ConsistentWithCroc) {
  const std::vector<double> h0 = normals(1000, 0.0, 3);
  const std::vector<double> h1 = normals(1000, 1.5, 4);
  const RocCurve c = empirical_croc(h0, h1);
  for (double target : {0.01, 0.05, 0.1, 0.3}) {
    const PmdPoint p = pmd_at_pfa(h0, h1, target);
    EXPECT_LE(p.pfa, target);
    // Smallest qualifying threshold among the H0 samples.
    double best = INFINITY, pmd = 0.0;
    for (const RocPoint& pt : c.points) {
      const bool is_h0 = std::find(h0.begin(), h0.end(), pt.threshold) != h0.end();
      if (is_h0 && pt.pfa <= target && pt.threshold < best) best = pt.threshold, pmd = pt.pmd;
    }
    EXPECT_EQ(p.threshold, best);
    EXPECT_DOUBLE_EQ(p.pmd, pmd);
  }
}

TEST(Deflection, HandCases) {
  EXPECT_DOUBLE_EQ(deflection({0.0, 2.0}, {3.0}), 2.0);
  EXPECT_DOUBLE_EQ(deflection({0.0, 2.0}, {-1.0}), 2.0);
  EXPECT_DOUBLE_EQ(deflection({1.0, 3.0, 1.0, 3.0}, {1.0, 3.0}), 0.0);
  EXPECT_THROW(deflection({1.0, 1.0}, {2.0}), ConfigError);
}

TEST(KsDistance, HandCasesAndAtom) {
  EXPECT_DOUBLE_EQ(ks_distance({0.5}, [](double t) { return std::min(t, 1.0); }), 0.5);
  // Half the mass at 0: an atom in both law and sample.
  auto atom = [](double t) { return t <= 0 ? 0.5 : 0.5 + 0.5 * std::min(t, 1.0); };
  EXPECT_NEAR(ks_distance({0, 0, 0.25, 0.75}, atom), 0.125, 1e-15);
  EXPECT_THROW(ks_distance({-1.0}, atom), ConfigError);
}

TEST(KsDistance, UniformSampleIsSmall) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(100000);
  for (double& v : x) v = u(rng);
  EXPECT_LT(ks_distance(x, [](double t) { return std::min(t, 1.0); }), 0.006);
}

TEST(KsTwoSample, HandCases) {
  EXPECT_EQ(ks_two_sample({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(ks_two_sample({1, 2}, {3, 4}), 1.0);
  EXPECT_DOUBLE_EQ(ks_two_sample({1, 3}, {2, 4}), 0.5);
}

TEST(AsymptoticScale, Factors) {
  EXPECT_EQ(asymptotic_scale(Detector::GLRT, 200), 200.0);
  EXPECT_EQ(asymptotic_scale(Detector::LR, 200), 200.0);
  EXPECT_EQ(asymptotic_scale(Detector::LMP, 200), 2.0);
  EXPECT_EQ(asymptotic_scale(Detector::MD, 200), 1.0);
  EXPECT_EQ(to_asymptotic_scale({-1e-17, 0.5}, Detector::LMP, 10), (std::vector<double>{0.0, 1.0}));
}

TEST(TheoryThresholdPmd, NullDrawGivesCdfAtQuantile) {
  const std::vector<ThetaVector> zero{ThetaVector{Eigen::VectorXd::Zero(3)}};
  const TheoryPmd t = theory_threshold_pmd(zero, 200, 50, 0.1);
  EXPECT_NEAR(t.threshold, quantile_h0(0.9, 3), 1e-12);
  EXPECT_NEAR(t.pmd, 0.9, 1e-7);
  EXPECT_EQ(t.pmd_stderr, 0.0);
}

TEST(SpreadIndices, EvenAndClamped) {
  EXPECT_EQ(spread_indices(10, 5), (std::vector<int>{0, 2, 4, 6, 8}));
  EXPECT_EQ(spread_indices(3, 10), (std::vector<int>{0, 1, 2}));
}

TEST(LawSamples, NullSamplesNonnegativeAndDeterministic) {
  const ThetaVector zero{Eigen::VectorXd::Zero(3)};
  const LawSamples a = simulate_law_samples(zero, 50, 50, 200, 9, Stream::Gaussian, 1);
  const LawSamples b = simulate_law_samples(zero, 50, 50, 200, 9, Stream::Gaussian, 4);
  EXPECT_EQ(a.glrt, b.glrt);
  EXPECT_EQ(a.lmp, b.lmp);
  EXPECT_EQ(a.excluded, 0);
  for (double v : a.lmp) EXPECT_GE(v, 0.0);
  // About 1/8 of null draws give every local MLE at zero.
  const auto zeros = std::count(a.lmp.begin(), a.lmp.end(), 0.0);
  EXPECT_NEAR(zeros / 200.0, 0.125, 0.08);
}
