#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string_view>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "wsnd/error.hpp"
#include "wsnd/estimators.hpp"
#include "wsnd/model.hpp"

namespace wsnd {

enum class Detector { GLRT, LMP, LR, MD, SD, SMC, SSE, ME, RD };

inline constexpr std::array<Detector, 9> kAllDetectors{
    Detector::GLRT, Detector::LMP, Detector::LR, Detector::MD, Detector::SD,
    Detector::SMC,  Detector::SSE, Detector::ME, Detector::RD};

inline constexpr std::string_view detector_name(Detector d) {
  switch (d) {
    case Detector::GLRT: return "glrt";
    case Detector::LMP: return "lmp";
    case Detector::LR: return "lr";
    case Detector::MD: return "md";
    case Detector::SD: return "sd";
    case Detector::SMC: return "smc";
    case Detector::SSE: return "sse";
    case Detector::ME: return "me";
    case Detector::RD: return "rd";
  }
  return "?";
}

inline std::optional<Detector> parse_detector(std::string_view name) {
  for (Detector d : kAllDetectors) {
    if (detector_name(d) == name) return d;
  }
  return std::nullopt;
}

/// One trial's statistics under one hypothesis. glrt and lr are on the
/// (2/L) log scale, lmp on the log scale.
struct DetectorSample {
  double glrt = 0.0;
  double lmp = 0.0;
  double lr = 0.0;
  double md = 0.0;
  double sd = 0.0;
  double smc = 0.0;
  double sse = 0.0;
  double me = 0.0;
  double rao = 0.0;
  Eigen::VectorXd lmp_locals;
  bool glrt_converged = true;
  double glrt_kkt = 0.0;

  double value(Detector d) const {
    switch (d) {
      case Detector::GLRT: return glrt;
      case Detector::LMP: return lmp;
      case Detector::LR: return lr;
      case Detector::MD: return md;
      case Detector::SD: return sd;
      case Detector::SMC: return smc;
      case Detector::SSE: return sse;
      case Detector::ME: return me;
      case Detector::RD: return rao;
    }
    return 0.0;
  }
};

/// (2/L) log T_G = -log det Sigma(theta) + (1/L) sum_l [ |z_l|^2 - r_l^T Sigma^-1 r_l ],
/// r_l = z_l - sqrt(M) theta.
inline double glrt_statistic(const JointLikelihood& lik, const Eigen::VectorXd& theta) {
  if (theta.size() != lik.nodes()) throw ConfigError("glrt_statistic: size mismatch");
  if (!(theta.array() >= 0.0).all()) throw ConfigError("glrt_statistic: theta must be >= 0");
  return -structured_logdet(theta) + lik.second_moment().trace() - lik.mean_quadratic(theta);
}

inline double glrt_statistic(const EnergyMatrix& data, const ThetaVector& theta_hat) {
  return glrt_statistic(JointLikelihood(data), theta_hat.theta);
}

/// Genie-aided statistic: the GLRT formula at the true parameter.
inline double lr_statistic(const EnergyMatrix& data, const ThetaVector& theta_true) {
  return glrt_statistic(JointLikelihood(data), theta_true.theta);
}

struct LmpResult {
  double statistic = 0.0;
  Eigen::VectorXd locals;
};

/// log T_k = sum_l [ -log(1 + t) + z^2/2 - ((z - sqrt(M) t)/(1 + t))^2 / 2 ] at the local MLE t.
inline LmpResult lmp_statistic(const EnergyMatrix& data) {
  const SummaryMoments mom = summary_moments(data);
  const int N = data.nodes();
  const double L = data.windows();
  const double sm = std::sqrt(static_cast<double>(data.M));
  LmpResult out;
  out.locals.resize(N);
  for (int k = 0; k < N; ++k) {
    const double t = local_mle(mom.m1[k], mom.m2[k], data.M);
    if (t == 0.0) {
      out.locals[k] = 0.0;
      continue;
    }
    // Expanded through the moments: sum_l (z - a)^2 = L (m2 - 2 a m1 + a^2).
    const double a = sm * t;
    const double sq = mom.m2[k] - 2.0 * a * mom.m1[k] + a * a;
    out.locals[k] = L * (-std::log1p(t) + 0.5 * mom.m2[k] - 0.5 * sq / ((1.0 + t) * (1.0 + t)));
  }
  out.statistic = out.locals.sum();
  return out;
}

inline double mean_detector(const EnergyMatrix& data) { return data.z.mean(); }

inline double square_detector(const EnergyMatrix& data) { return data.z.array().square().mean(); }

inline double smc_detector(const EnergyMatrix& data) {
  return data.z.rowwise().mean().maxCoeff();
}

inline double rao_detector(const EnergyMatrix& data) {
  const double sm = std::sqrt(static_cast<double>(data.M));
  const Eigen::ArrayXXd z = data.z.array();
  return (z.square() + sm * z - 1.0).square().mean();
}

enum class CovarianceMode { Uncentered, Centered };

struct EigenStatistics {
  double sse = 0.0;
  double me = 0.0;
  Eigen::VectorXd eigenvalues;  // ascending
};

inline Eigen::MatrixXd sample_covariance(const EnergyMatrix& data, CovarianceMode mode) {
  const double L = data.windows();
  if (mode == CovarianceMode::Uncentered) return (data.z * data.z.transpose()) / L;
  const Eigen::MatrixXd c = data.z.colwise() - data.z.rowwise().mean();
  return (c * c.transpose()) / L;
}

/// SSE = sum_n ( -log l_n + l_n ) over l_n = (lambda_n - 1)_+ > 0; ME = max lambda_n.
inline EigenStatistics eigen_detectors(const EnergyMatrix& data,
                                       CovarianceMode mode = CovarianceMode::Uncentered) {
  if (data.windows() < 1) throw ConfigError("eigen_detectors: need at least one window");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sample_covariance(data, mode),
                                                        Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw ConfigError("eigen_detectors: eigen-decomposition failed");
  }
  EigenStatistics out;
  out.eigenvalues = solver.eigenvalues();
  out.me = out.eigenvalues.maxCoeff();
  for (Eigen::Index i = 0; i < out.eigenvalues.size(); ++i) {
    const double lp = out.eigenvalues[i] - 1.0;
    if (lp > 0.0) out.sse += -std::log(lp) + lp;
  }
  return out;
}

struct DetectorOptions {
  GlobalMleOptions mle;
  CovarianceMode covariance = CovarianceMode::Uncentered;
};

/// Every statistic for one data matrix. `theta_true` feeds the LR detector.
inline DetectorSample evaluate_detectors(const EnergyMatrix& data, const ThetaVector& theta_true,
                                         const DetectorOptions& opt = {}) {
  const JointLikelihood lik(data);
  DetectorSample s;
  const LmpResult lmp = lmp_statistic(data);
  s.lmp = lmp.statistic;
  s.lmp_locals = lmp.locals;

  const GlobalMleResult mle =
      global_mle(lik, local_mle(summary_moments(data), data.M), opt.mle);
  s.glrt = glrt_statistic(lik, mle.estimate.theta);
  s.glrt_converged = mle.converged;
  s.glrt_kkt = mle.kkt_residual;
  s.lr = glrt_statistic(lik, theta_true.theta);

  s.md = mean_detector(data);
  s.sd = square_detector(data);
  s.smc = smc_detector(data);
  s.rao = rao_detector(data);
  const EigenStatistics eig = eigen_detectors(data, opt.covariance);
  s.sse = eig.sse;
  s.me = eig.me;
  return s;
}

}  // namespace wsnd
