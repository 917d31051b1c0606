#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "wsnd/error.hpp"

namespace wsnd {

enum class SourceKind { GaussianCircular, Qam16 };
enum class Hypothesis { H0, H1 };

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct ModelConfig {
  int N = 10;
  int M = 50;
  int L = 10;
  double Es = 1.0;
  double N0 = 1.0;
  SourceKind source_kind = SourceKind::GaussianCircular;
  std::uint64_t seed = 1;

  void validate() const {
    if (N < 1) throw ConfigError("model: N must be >= 1");
    if (M < 1) throw ConfigError("model: M must be >= 1");
    if (L < 1) throw ConfigError("model: L must be >= 1");
    if (!(Es > 0.0) || !std::isfinite(Es)) throw ConfigError("model: Es must be > 0");
    if (!(N0 > 0.0) || !std::isfinite(N0)) throw ConfigError("model: N0 must be > 0");
  }
};

/// Path-loss / log-normal shadowing parameters and deployment geometry.
struct ChannelConfig {
  double K_dB = -37.0;
  double alpha = 4.0;
  double d0 = 10.0;
  double sigma_eta = 3.0;  // dB
  double area_side = 1600.0;
  Point2 source_position{0.0, 1000.0};

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("channel: alpha must be > 0");
    if (!(d0 > 0.0)) throw ConfigError("channel: d0 must be > 0");
    if (!(sigma_eta >= 0.0)) throw ConfigError("channel: sigma_eta must be >= 0");
    if (!(area_side > 0.0)) throw ConfigError("channel: area_side must be > 0");
  }
};

struct Topology {
  std::vector<Point2> node_positions;
  Point2 source_position;
  Eigen::VectorXd distances;

  int nodes() const { return static_cast<int>(node_positions.size()); }
};

struct ChannelRealization {
  Eigen::VectorXd sigma2;  // linear scale
  Eigen::VectorXcd h;

  int nodes() const { return static_cast<int>(sigma2.size()); }
};

/// Nonnegative SNR-like parameter, theta_n = Es |h_n|^2 / N0.
struct ThetaVector {
  Eigen::VectorXd theta;

  int size() const { return static_cast<int>(theta.size()); }
  bool in_cone() const { return (theta.array() >= 0.0).all(); }
};

/// N x L normalized energies; column l is the network snapshot z_l.
struct EnergyMatrix {
  Eigen::MatrixXd z;
  int M = 1;

  int nodes() const { return static_cast<int>(z.rows()); }
  int windows() const { return static_cast<int>(z.cols()); }
};

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// N nodes uniform in the square of side `area_side` centered at the
/// origin. A node landing exactly on the source is redrawn.
template <class URBG>
Topology sample_topology(int N, const ChannelConfig& cfg, URBG& rng) {
  if (N < 1) throw ConfigError("sample_topology: N must be >= 1");
  cfg.validate();
  const double half = 0.5 * cfg.area_side;
  std::uniform_real_distribution<double> coord(-half, half);
  Topology topo;
  topo.source_position = cfg.source_position;
  topo.node_positions.reserve(N);
  topo.distances.resize(N);
  for (int n = 0; n < N; ++n) {
    Point2 p;
    double d = 0.0;
    do {
      p.x = coord(rng);
      p.y = coord(rng);
      d = distance(p, cfg.source_position);
    } while (!(d > 0.0));
    topo.node_positions.push_back(p);
    topo.distances[n] = d;
  }
  return topo;
}

/// sigma2_n(dB) = K - 10 alpha log10(d_n / d0) - eta_n, then h_n ~ CN(0, sigma2_n).
template <class URBG>
ChannelRealization sample_channel(const Topology& topo, const ChannelConfig& cfg, URBG& rng) {
  cfg.validate();
  const int N = topo.nodes();
  std::normal_distribution<double> shadow(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ChannelRealization ch;
  ch.sigma2.resize(N);
  ch.h.resize(N);
  for (int n = 0; n < N; ++n) {
    const double eta = cfg.sigma_eta * shadow(rng);
    const double db = cfg.K_dB - 10.0 * cfg.alpha * std::log10(topo.distances[n] / cfg.d0) - eta;
    ch.sigma2[n] = std::pow(10.0, db / 10.0);
  }
  for (int n = 0; n < N; ++n) {
    const double scale = std::sqrt(0.5 * ch.sigma2[n]);
    const double re = gauss(rng);
    const double im = gauss(rng);
    ch.h[n] = {scale * re, scale * im};
  }
  return ch;
}

inline ThetaVector theta_from_channel(const ChannelRealization& ch, double Es, double N0) {
  if (!(Es > 0.0) || !(N0 > 0.0)) throw ConfigError("theta_from_channel: Es and N0 must be > 0");
  ThetaVector out;
  out.theta = ch.h.cwiseAbs2() * (Es / N0);
  return out;
}

/// Source energy that yields `snr_db` = 10 log10(Es * mean(sigma2) / N0)
/// for this channel draw.
inline double source_energy_for_snr(const ChannelRealization& ch, double snr_db, double N0) {
  const double mean_sigma2 = ch.sigma2.mean();
  return std::pow(10.0, snr_db / 10.0) * N0 / mean_sigma2;
}

namespace detail {

// Unit-average-energy 16-QAM: {+-1, +-3}^2 has mean energy 10.
inline constexpr std::array<double, 4> kQamLevels{-3.0, -1.0, 1.0, 3.0};

template <class URBG>
std::complex<double> draw_symbol(SourceKind kind, double Es, URBG& rng,
                                 std::normal_distribution<double>& gauss,
                                 std::uniform_int_distribution<int>& qam) {
  if (kind == SourceKind::GaussianCircular) {
    const double scale = std::sqrt(0.5 * Es);
    const double re = gauss(rng);
    const double im = gauss(rng);
    return {scale * re, scale * im};
  }
  const int idx = qam(rng);
  const double scale = std::sqrt(Es / 10.0);
  return {scale * kQamLevels[idx & 3], scale * kQamLevels[(idx >> 2) & 3]};
}

}  // namespace detail

/// Waveform-level energy detector output. Per window, one source sequence
/// s(1..M) is shared by every node; h is fixed across windows. Under H0 no
/// source samples are drawn, so the result does not depend on source_kind.
template <class URBG>
EnergyMatrix simulate_energy(const ChannelRealization& ch, const ModelConfig& cfg,
                             Hypothesis hyp, URBG& rng) {
  cfg.validate();
  const int N = ch.nodes();
  if (N != cfg.N) throw ConfigError("simulate_energy: channel size does not match model N");
  const int M = cfg.M;
  const int L = cfg.L;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> qam(0, 15);
  const double noise_scale = std::sqrt(0.5 * cfg.N0);
  const double norm = 1.0 / (std::sqrt(static_cast<double>(M)) * cfg.N0);

  EnergyMatrix out;
  out.M = M;
  out.z.resize(N, L);
  std::vector<std::complex<double>> s(M);
  for (int l = 0; l < L; ++l) {
    if (hyp == Hypothesis::H1) {
      for (int i = 0; i < M; ++i) {
        s[i] = detail::draw_symbol(cfg.source_kind, cfg.Es, rng, gauss, qam);
      }
    }
    for (int n = 0; n < N; ++n) {
      double acc = 0.0;
      const std::complex<double> hn = ch.h[n];
      for (int i = 0; i < M; ++i) {
        const double vr = noise_scale * gauss(rng);
        const double vi = noise_scale * gauss(rng);
        std::complex<double> y{vr, vi};
        if (hyp == Hypothesis::H1) y += hn * s[i];
        acc += std::norm(y) - cfg.N0;
      }
      out.z(n, l) = acc * norm;
    }
  }
  return out;
}

/// mu = sqrt(M) theta, Sigma = theta theta^T + 2 diag(theta) + I.
inline GaussianMoments gaussian_moments(const ThetaVector& theta, int M) {
  if (!theta.in_cone()) throw ConfigError("gaussian_moments: theta must be nonnegative");
  if (M < 1) throw ConfigError("gaussian_moments: M must be >= 1");
  const Eigen::VectorXd& t = theta.theta;
  GaussianMoments g;
  g.mean = std::sqrt(static_cast<double>(M)) * t;
  g.cov = t * t.transpose();
  g.cov.diagonal().array() += 2.0 * t.array() + 1.0;
  return g;
}

/// L i.i.d. draws from N(mu(theta), Sigma(theta)) through a Cholesky factor.
template <class URBG>
EnergyMatrix sample_gaussian_approx(const ThetaVector& theta, int M, int L, URBG& rng) {
  if (L < 1) throw ConfigError("sample_gaussian_approx: L must be >= 1");
  const GaussianMoments g = gaussian_moments(theta, M);
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("sample_gaussian_approx: covariance factorization failed");
  }
  const Eigen::MatrixXd factor = llt.matrixL();
  const int N = theta.size();
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd u(N, L);
  for (int l = 0; l < L; ++l) {
    for (int n = 0; n < N; ++n) u(n, l) = gauss(rng);
  }
  EnergyMatrix out;
  out.M = M;
  out.z = factor * u;
  out.z.colwise() += g.mean;
  return out;
}

}  // namespace wsnd
