#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <gtest/gtest.h>

#include "wsnd/estimators.hpp"
#include "wsnd/rng.hpp"

using namespace wsnd;

namespace {

// Per-node local log-likelihood per window, up to constants, as a function of t.
double local_objective(double t, double m1, double m2, int M) {
  const double sm = std::sqrt(static_cast<double>(M));
  return -std::log1p(t) - (m2 - 2.0 * sm * t * m1 + M * t * t) / (2.0 * (1.0 + t) * (1.0 + t));
}

double golden_max(double m1, double m2, int M) {
  // The objective is unimodal on [0, inf); bracket by doubling.
  double hi = 1.0;
  while (hi < 1e6 && local_objective(hi, m1, m2, M) >= local_objective(0.5 * hi, m1, m2, M)) hi *= 2.0;
  double a = 0.0, b = hi;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  for (int i = 0; i < 200 && b - a > 1e-12; ++i) {
    if (local_objective(c, m1, m2, M) > local_objective(d, m1, m2, M)) {
      b = d;
    } else {
      a = c;
    }
    c = b - r * (b - a);
    d = a + r * (b - a);
  }
  const double t = 0.5 * (a + b);
  return local_objective(0.0, m1, m2, M) >= local_objective(t, m1, m2, M) ? 0.0 : t;
}

EnergyMatrix shifted_normals(int N, int L, int M, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  EnergyMatrix d;
  d.M = M;
  d.z.resize(N, L);
  for (int n = 0; n < N; ++n)
    for (int l = 0; l < L; ++l) d.z(n, l) = scale * g(rng) + 0.3 * n;
  return d;
}

// Naive sum over snapshots with a dense inverse.
double dense_loglik(const EnergyMatrix& d, const Eigen::VectorXd& theta) {
  const int N = d.nodes();
  Eigen::MatrixXd sigma = theta * theta.transpose();
  sigma.diagonal().array() += 2.0 * theta.array() + 1.0;
  const Eigen::VectorXd mu = std::sqrt(static_cast<double>(d.M)) * theta;
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  const Eigen::MatrixXd Lc = llt.matrixL();
  const double logdet = 2.0 * Lc.diagonal().array().log().sum();
  double total = 0.0;
  for (int l = 0; l < d.windows(); ++l) {
    const Eigen::VectorXd r = d.z.col(l) - mu;
    total += -0.5 * N * std::log(2.0 * std::numbers::pi) - 0.5 * logdet - 0.5 * r.dot(llt.solve(r));
  }
  return total;
}

}  // namespace

TEST(SummaryMoments, Basics) {
  EnergyMatrix z;
  z.M = 4;
  z.z = Eigen::MatrixXd::Zero(2, 3);
  auto m = summary_moments(z);
  EXPECT_EQ(m.m1, Eigen::Vector2d::Zero());
  EXPECT_EQ(m.m2, Eigen::Vector2d::Zero());
  z.z.resize(1, 2);
  z.z << 1, -1;
  m = summary_moments(z);
  EXPECT_EQ(m.m1[0], 0.0);
  EXPECT_EQ(m.m2[0], 1.0);
  EXPECT_EQ(m.L, 2);
}

TEST(SummaryMoments, MatchesNaiveLoops) {
  const EnergyMatrix d = shifted_normals(5, 37, 50, 3);
  const auto m = summary_moments(d);
  for (int n = 0; n < 5; ++n) {
    double s1 = 0, s2 = 0;
    for (int l = 0; l < 37; ++l) {
      s1 += d.z(n, l);
      s2 += d.z(n, l) * d.z(n, l);
    }
    EXPECT_NEAR(m.m1[n], s1 / 37, 1e-12 * std::max(1.0, std::abs(s1 / 37)));
    EXPECT_NEAR(m.m2[n], s2 / 37, 1e-12 * std::max(1.0, s2 / 37));
    EXPECT_GE(m.m2[n], m.m1[n] * m.m1[n] - 1e-15);
  }
}

TEST(LocalMle, NullPopulationMomentsGiveZero) { EXPECT_EQ(local_mle(0.0, 1.0, 50), 0.0); }

TEST(LocalMle, PopulationMomentsRecoverTheta) {
  const int M = 50;
  const double t = 0.5;
  const double m1 = std::sqrt(M) * t;
  const double m2 = (1 + t) * (1 + t) + M * t * t;
  EXPECT_NEAR(local_mle(m1, m2, M), t, 1e-10);
  EXPECT_NEAR(golden_max(m1, m2, M), t, 1e-6);
}

TEST(LocalMle, BoundaryClamp) {
  EXPECT_EQ(local_mle(-1.0, 0.5, 4), 0.0);
  double best = -INFINITY, arg = -1;
  for (int i = 0; i <= 100000; ++i) {
    const double t = 10.0 * i / 100000;
    const double v = local_objective(t, -1.0, 0.5, 4);
    if (v > best) best = v, arg = t;
  }
  EXPECT_EQ(arg, 0.0);
}

TEST(LocalMle, ExactArgmaxOnRandomMoments) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> um(1, 200);
  std::normal_distribution<double> g(0.0, 2.0);
  std::exponential_distribution<double> e(0.5);
  for (int i = 0; i < 3000; ++i) {
    const int M = um(rng);
    const double m1 = g(rng);
    const double m2 = m1 * m1 + e(rng);
    EXPECT_NEAR(local_mle(m1, m2, M), golden_max(m1, m2, M), 1e-6) << m1 << " " << m2 << " " << M;
  }
}

TEST(MarginalLoglik, PlugIns) {
  const std::vector<double> zeros(7, 0.0);
  EXPECT_NEAR(marginal_loglik(zeros, 0.0, 50), -3.5 * std::log(2 * std::numbers::pi), 1e-12);
  const std::vector<double> one{std::sqrt(50.0)};
  EXPECT_NEAR(marginal_loglik(one, 1.0, 50), -std::log(2.0) - 0.5 * std::log(2 * std::numbers::pi), 1e-12);
  EXPECT_THROW(marginal_loglik(one, -0.1, 50), ConfigError);
}

TEST(MarginalLoglik, GridArgmaxIsLocalMle) {
  const EnergyMatrix d = shifted_normals(1, 40, 50, 17);
  std::vector<double> z(d.z.data(), d.z.data() + 40);
  for (double& v : z) v += 3.0;
  const auto m = summary_moments(EnergyMatrix{Eigen::Map<Eigen::MatrixXd>(z.data(), 1, 40), 50});
  const double t_hat = local_mle(m.m1[0], m.m2[0], 50);
  double best = -INFINITY, arg = 0;
  for (int i = 0; i <= 20000; ++i) {
    const double t = 2.0 * i / 20000;
    const double v = marginal_loglik(z, t, 50);
    if (v > best) best = v, arg = t;
  }
  EXPECT_NEAR(arg, t_hat, 2.0 / 20000);
}

TEST(StructuredAlgebra, InverseAndLogdetMatchDense) {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> e(1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int N = 1 + trial % 8;
    Eigen::VectorXd t(N);
    for (int k = 0; k < N; ++k) t[k] = (trial % 4 == 0 && k == 0) ? 0.0 : 2.0 * e(rng);
    Eigen::MatrixXd sigma = t * t.transpose();
    sigma.diagonal().array() += 2.0 * t.array() + 1.0;
    const Eigen::MatrixXd P = structured_inverse(t);
    const Eigen::MatrixXd dense = sigma.inverse();
    EXPECT_LT((P - dense).cwiseAbs().maxCoeff(), 1e-10 * dense.cwiseAbs().maxCoeff());
    EXPECT_LT((sigma * P - Eigen::MatrixXd::Identity(N, N)).cwiseAbs().maxCoeff(), 1e-9);
    const double ld = std::log(sigma.determinant());
    EXPECT_NEAR(structured_logdet(t), ld, 1e-10 * std::max(1.0, std::abs(ld)));
  }
}

TEST(JointLikelihood, NullValue) {
  const EnergyMatrix d = shifted_normals(4, 9, 50, 6);
  const double expected = -0.5 * 4 * 9 * std::log(2 * std::numbers::pi) - 0.5 * d.z.squaredNorm();
  const auto e = joint_loglik_grad(d, ThetaVector{Eigen::VectorXd::Zero(4)});
  EXPECT_NEAR(e.value, expected, 1e-10 * std::abs(expected));
}

TEST(JointLikelihood, ValueMatchesDenseSum) {
  const EnergyMatrix d = shifted_normals(6, 25, 50, 8, 2.0);
  std::mt19937_64 rng(1);
  std::exponential_distribution<double> e(2.0);
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd t(6);
    for (int k = 0; k < 6; ++k) t[k] = e(rng);
    const double ref = dense_loglik(d, t);
    EXPECT_NEAR(JointLikelihood(d).value(t), ref, 1e-10 * std::abs(ref));
    EXPECT_NEAR(JointLikelihood(d).evaluate(t).value, ref, 1e-10 * std::abs(ref));
  }
}

TEST(JointLikelihood, GradientMatchesCentralDifferences) {
  const EnergyMatrix d = shifted_normals(5, 30, 50, 10, 1.5);
  const JointLikelihood lik(d);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  const double h = 1e-5;
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd t(5);
    for (int k = 0; k < 5; ++k) t[k] = u(rng);
    const Eigen::VectorXd g = lik.evaluate(t).gradient;
    Eigen::VectorXd fd(5);
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd tp = t, tm = t;
      tp[k] += h;
      tm[k] -= h;
      fd[k] = (lik.value(tp) - lik.value(tm)) / (2 * h);
    }
    EXPECT_LT((g - fd).norm() / std::max(1.0, fd.norm()), 1e-5);
  }
}

TEST(JointLikelihood, RejectsNegativeTheta) {
  const EnergyMatrix d = shifted_normals(2, 3, 50, 1);
  EXPECT_THROW(joint_loglik_grad(d, ThetaVector{Eigen::Vector2d(0.1, -0.1)}), ConfigError);
}

TEST(JointLikelihood, NonFiniteDataIsRejected) {
  EnergyMatrix d = shifted_normals(2, 3, 50, 1);
  d.z(0, 0) = 1e200;
  EXPECT_THROW(joint_loglik_grad(d, ThetaVector{Eigen::Vector2d(0.1, 0.1)}), ConfigError);
}

TEST(GlobalMle, ZeroDataStaysAtOrigin) {
  EnergyMatrix d;
  d.M = 50;
  d.z = Eigen::MatrixXd::Zero(4, 10);
  const auto r = global_mle(d);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.estimate.theta, Eigen::VectorXd::Zero(4));
}

TEST(GlobalMle, SingleNodeEqualsLocalMle) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    Rng rng(100 + s);
    const ThetaVector th{Eigen::VectorXd::Constant(1, 0.02 * s)};
    const EnergyMatrix d = sample_gaussian_approx(th, 50, 20, rng);
    const auto m = summary_moments(d);
    const auto r = global_mle(d);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.estimate.theta[0], local_mle(m.m1[0], m.m2[0], 50), 1e-8);
  }
}

TEST(GlobalMle, ConsistentAtLargeL) {
  Rng rng(55);
  const ThetaVector th{Eigen::Vector3d(0.2, 0.1, 0.3)};
  const int L = 10000, M = 50;
  const EnergyMatrix d = sample_gaussian_approx(th, M, L, rng);
  const auto r = global_mle(d);
  EXPECT_TRUE(r.converged);
  const double band = 3.0 * std::sqrt(1.0 / (L * (M + 2.0)));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.estimate.theta[k], th.theta[k], band);

  // Coarse grid around the truth, refined by coordinate search, cannot beat it.
  const JointLikelihood lik(d);
  Eigen::Vector3d best = th.theta;
  double best_v = lik.value(best);
  for (double step : {0.01, 0.001, 0.0001}) {
    for (int sweep = 0; sweep < 20; ++sweep) {
      for (int k = 0; k < 3; ++k) {
        for (double dir : {-1.0, 1.0}) {
          Eigen::Vector3d c = best;
          c[k] = std::max(0.0, c[k] + dir * step);
          const double v = lik.value(c);
          if (v > best_v) best_v = v, best = c;
        }
      }
    }
  }
  EXPECT_GE(r.loglik, best_v - 1e-6);
  EXPECT_LT((r.estimate.theta - best).cwiseAbs().maxCoeff(), 2e-3);
}

TEST(GlobalMle, ImprovesOnInitAndSatisfiesKkt) {
  for (std::uint64_t s = 0; s < 40; ++s) {
    Rng rng(300 + s);
    Eigen::VectorXd t(6);
    for (int k = 0; k < 6; ++k) t[k] = 0.05 * ((s + k) % 4);
    const EnergyMatrix d = sample_gaussian_approx(ThetaVector{t}, 50, 10, rng);
    const JointLikelihood lik(d);
    const ThetaVector init = local_mle(summary_moments(d), 50);
    const auto r = global_mle(lik, init);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.kkt_residual, 1e-6);
    EXPECT_GE(r.loglik, lik.value(init.theta) - 1e-9);
    EXPECT_TRUE(r.estimate.in_cone());
    const auto e = lik.evaluate(r.estimate.theta);
    EXPECT_NEAR(kkt_residual(r.estimate.theta, e.gradient, 10, 50), r.kkt_residual, 1e-15);
  }
}

TEST(GlobalMle, IterationCapIsFlagged) {
  Rng rng(7);
  const EnergyMatrix d = sample_gaussian_approx(ThetaVector{Eigen::VectorXd::Constant(5, 0.3)}, 50, 10, rng);
  GlobalMleOptions opt;
  opt.max_iters = 1;
  opt.tolerance = 1e-14;
  const auto r = global_mle(JointLikelihood(d), ThetaVector{Eigen::VectorXd::Constant(5, 3.0)}, opt);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 1);
}

TEST(Estimators, PermutationEquivariance) {
  Rng rng(77);
  const EnergyMatrix d = sample_gaussian_approx(ThetaVector{Eigen::Vector4d(0.3, 0.0, 0.1, 0.5)}, 50, 15, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  EnergyMatrix p = d;
  p.z = perm * d.z;
  const auto a = global_mle(d), b = global_mle(p);
  EXPECT_LT((perm * a.estimate.theta - b.estimate.theta).cwiseAbs().maxCoeff(), 1e-6);
  const auto la = local_mle(summary_moments(d), 50), lb = local_mle(summary_moments(p), 50);
  EXPECT_LT((perm * la.theta - lb.theta).cwiseAbs().maxCoeff(), 1e-14);
}
