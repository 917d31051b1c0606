#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

#include <Eigen/Core>

#include "wsnd/error.hpp"
#include "wsnd/model.hpp"

namespace wsnd {

/// Per-node sample moments m1_k = mean z_k(l), m2_k = mean z_k(l)^2.
struct SummaryMoments {
  Eigen::VectorXd m1;
  Eigen::VectorXd m2;
  int L = 0;
};

struct LikelihoodEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

inline SummaryMoments summary_moments(const EnergyMatrix& data) {
  const int L = data.windows();
  if (L < 1) throw ConfigError("summary_moments: need at least one window");
  SummaryMoments out;
  out.L = L;
  out.m1 = data.z.rowwise().mean();
  out.m2 = data.z.array().square().rowwise().mean();
  return out;
}

/// Closed-form maximizer of the N(sqrt(M) t, (1+t)^2) likelihood over t >= 0:
/// the larger root of t^2 + b t - c = 0 with b = M + 2 + sqrt(M) m1,
/// c = m2 + sqrt(M) m1 - 1, clipped at zero. A negative radicand can only
/// come from rounding (m2 >= m1^2 makes it positive whenever b < 0) and is
/// clamped to zero.
inline double local_mle(double m1, double m2, int M) {
  if (M < 1) throw ConfigError("local_mle: M must be >= 1");
  const double sm = std::sqrt(static_cast<double>(M));
  const double b = M + 2.0 + sm * m1;
  const double c = m2 + sm * m1 - 1.0;
  const double radicand = std::max(b * b + 4.0 * c, 0.0);
  return std::max(0.5 * (std::sqrt(radicand) - b), 0.0);
}

inline ThetaVector local_mle(const SummaryMoments& moments, int M) {
  ThetaVector out;
  out.theta.resize(moments.m1.size());
  for (Eigen::Index k = 0; k < moments.m1.size(); ++k) {
    out.theta[k] = local_mle(moments.m1[k], moments.m2[k], M);
  }
  return out;
}

/// log prod_l N(z_k(l); sqrt(M) t, (1+t)^2), including the 2 pi constant.
inline double marginal_loglik(std::span<const double> zk, double theta_k, int M) {
  if (!(theta_k >= 0.0)) throw ConfigError("marginal_loglik: theta_k must be >= 0");
  const double mean = std::sqrt(static_cast<double>(M)) * theta_k;
  const double sd = 1.0 + theta_k;
  double quad = 0.0;
  for (double z : zk) {
    const double r = (z - mean) / sd;
    quad += r * r;
  }
  const double L = static_cast<double>(zk.size());
  return -0.5 * L * std::log(2.0 * std::numbers::pi) - L * std::log(sd) - 0.5 * quad;
}

/// Sigma(theta)^-1 from the diagonal-plus-rank-one structure:
/// with D = I + 2 diag(theta), Sigma^-1 = D^-1 - w w^T / (1 + theta^T w), w = D^-1 theta.
inline Eigen::MatrixXd structured_inverse(const Eigen::VectorXd& theta) {
  const Eigen::ArrayXd d = 1.0 + 2.0 * theta.array();
  const Eigen::VectorXd w = (theta.array() / d).matrix();
  const double gamma = 1.0 + theta.dot(w);
  Eigen::MatrixXd P = -(w * w.transpose()) / gamma;
  P.diagonal().array() += 1.0 / d;
  return P;
}

/// log det Sigma(theta) = sum_i log(1 + 2 theta_i) + log(1 + theta^T D^-1 theta).
inline double structured_logdet(const Eigen::VectorXd& theta) {
  const Eigen::ArrayXd d = 1.0 + 2.0 * theta.array();
  const double gamma = 1.0 + (theta.array().square() / d).sum();
  return d.log().sum() + std::log(gamma);
}

/// Gaussian joint likelihood of the snapshots z_1..z_L under p(z; theta),
/// held through the sufficient statistics (sample mean and uncentered
/// second-moment matrix) so every evaluation is O(N^2) or O(N^3),
/// independent of L.
class JointLikelihood {
 public:
  explicit JointLikelihood(const EnergyMatrix& data)
      : N_(data.nodes()), L_(data.windows()), M_(data.M) {
    if (L_ < 1 || N_ < 1) throw ConfigError("JointLikelihood: empty data");
    mean_ = data.z.rowwise().mean();
    second_ = (data.z * data.z.transpose()) / static_cast<double>(L_);
    if (!second_.allFinite()) throw ConfigError("JointLikelihood: non-finite data");
  }

  int nodes() const { return N_; }
  int windows() const { return L_; }
  int M() const { return M_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& second_moment() const { return second_; }

  /// (1/L) sum_l (z_l - mu)(z_l - mu)^T.
  Eigen::MatrixXd scatter(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd mu = std::sqrt(static_cast<double>(M_)) * theta;
    Eigen::MatrixXd S = second_ - mean_ * mu.transpose() - mu * mean_.transpose();
    S += mu * mu.transpose();
    return S;
  }

  /// (1/L) sum_l (z_l - mu)^T Sigma^-1 (z_l - mu) = tr(Sigma^-1 S).
  double mean_quadratic(const Eigen::VectorXd& theta) const {
    const Eigen::MatrixXd S = scatter(theta);
    const Eigen::ArrayXd d = 1.0 + 2.0 * theta.array();
    const Eigen::VectorXd w = (theta.array() / d).matrix();
    const double gamma = 1.0 + theta.dot(w);
    return (S.diagonal().array() / d).sum() - w.dot(S * w) / gamma;
  }

  double value(const Eigen::VectorXd& theta) const {
    const double L = static_cast<double>(L_);
    const double v = -0.5 * L * N_ * std::log(2.0 * std::numbers::pi) -
                     0.5 * L * structured_logdet(theta) - 0.5 * L * mean_quadratic(theta);
    if (!std::isfinite(v)) throw ConfigError("joint log-likelihood is not finite");
    return v;
  }

  /// Value and gradient. With P = Sigma^-1, rbar = mean - mu, Q = P S P:
  /// d/dtheta_k = L [ -(P theta)_k - P_kk + sqrt(M) (P rbar)_k + (Q theta)_k + Q_kk ].
  LikelihoodEval evaluate(const Eigen::VectorXd& theta) const {
    const double L = static_cast<double>(L_);
    const double sm = std::sqrt(static_cast<double>(M_));
    const Eigen::MatrixXd P = structured_inverse(theta);
    const Eigen::MatrixXd S = scatter(theta);
    const Eigen::VectorXd rbar = mean_ - sm * theta;
    const Eigen::MatrixXd PS = P * S;
    const Eigen::MatrixXd Q = PS * P;

    LikelihoodEval out;
    out.value = -0.5 * L * N_ * std::log(2.0 * std::numbers::pi) -
                0.5 * L * structured_logdet(theta) - 0.5 * L * PS.trace();
    out.gradient = L * (-(P * theta) - P.diagonal() + sm * (P * rbar) + Q * theta + Q.diagonal());
    if (!std::isfinite(out.value) || !out.gradient.allFinite()) {
      throw ConfigError("joint log-likelihood is not finite");
    }
    return out;
  }

 private:
  int N_;
  int L_;
  int M_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd second_;
};

inline LikelihoodEval joint_loglik_grad(const EnergyMatrix& data, const ThetaVector& theta) {
  if (!theta.in_cone()) throw ConfigError("joint_loglik_grad: theta must be nonnegative");
  if (theta.size() != data.nodes()) throw ConfigError("joint_loglik_grad: size mismatch");
  return JointLikelihood(data).evaluate(theta.theta);
}

/// Projected-gradient stationarity measure
/// || theta - max(theta + g / (L (M + 2)), 0) ||_inf.
inline double kkt_residual(const Eigen::VectorXd& theta, const Eigen::VectorXd& gradient, int L,
                           int M) {
  const double step = 1.0 / (static_cast<double>(L) * (M + 2.0));
  return (theta - (theta + step * gradient).cwiseMax(0.0)).cwiseAbs().maxCoeff();
}

struct GlobalMleOptions {
  int max_iters = 500;
  double tolerance = 1e-6;
  double armijo = 1e-4;
};

struct GlobalMleResult {
  ThetaVector estimate;
  double loglik = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Maximizes the joint likelihood over theta >= 0 by projected gradient
/// ascent with Armijo backtracking along the projection arc. The first
/// step is 1/(L (M + 2)); later steps use the Barzilai-Borwein ratio.
/// If the origin scores better than `init` the ascent starts there.
/// Hitting the iteration cap returns the best iterate with converged = false.
inline GlobalMleResult global_mle(const JointLikelihood& lik, const ThetaVector& init,
                                  const GlobalMleOptions& opt = {}) {
  if (!init.in_cone()) throw ConfigError("global_mle: init must be nonnegative");
  if (init.size() != lik.nodes()) throw ConfigError("global_mle: init size mismatch");
  const int L = lik.windows();
  const int M = lik.M();
  const double base_step = 1.0 / (static_cast<double>(L) * (M + 2.0));

  Eigen::VectorXd theta = init.theta;
  LikelihoodEval cur = lik.evaluate(theta);
  {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(theta.size());
    LikelihoodEval at_zero = lik.evaluate(zero);
    if (at_zero.value > cur.value) {
      theta = zero;
      cur = std::move(at_zero);
    }
  }

  GlobalMleResult res;
  double step = base_step;
  int it = 0;
  double resid = kkt_residual(theta, cur.gradient, L, M);
  for (; it < opt.max_iters && resid >= opt.tolerance; ++it) {
    bool accepted = false;
    Eigen::VectorXd cand;
    double cand_value = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      cand = (theta + step * cur.gradient).cwiseMax(0.0);
      cand_value = lik.value(cand);
      if (cand_value >= cur.value + opt.armijo * cur.gradient.dot(cand - theta)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    LikelihoodEval next = lik.evaluate(cand);
    const Eigen::VectorXd s = cand - theta;
    const Eigen::VectorXd y = next.gradient - cur.gradient;
    const double sy = s.dot(y);
    if (sy < 0.0) {
      step = std::clamp(-s.squaredNorm() / sy, 1e-3 * base_step, 1e3 * base_step);
    } else {
      step = std::min(2.0 * step, 1e3 * base_step);
    }
    theta = std::move(cand);
    cur = std::move(next);
    resid = kkt_residual(theta, cur.gradient, L, M);
  }

  res.estimate.theta = theta;
  res.loglik = cur.value;
  res.kkt_residual = resid;
  res.iterations = it;
  res.converged = resid < opt.tolerance;
  return res;
}

inline GlobalMleResult global_mle(const EnergyMatrix& data, const ThetaVector& init,
                                  const GlobalMleOptions& opt = {}) {
  return global_mle(JointLikelihood(data), init, opt);
}

/// Warm-started from the local MLE.
inline GlobalMleResult global_mle(const EnergyMatrix& data, const GlobalMleOptions& opt = {}) {
  const JointLikelihood lik(data);
  return global_mle(lik, local_mle(summary_moments(data), data.M), opt);
}

}  // namespace wsnd
