#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wsnd/error.hpp"
#include "wsnd/estimators.hpp"
#include "wsnd/model.hpp"
#include "wsnd/quadrature.hpp"
#include "wsnd/special.hpp"

namespace wsnd {

/// Noncentralities psi_n = sqrt(L (M + 2)) theta_n of the truncated
/// chi-square law that governs 2 log T under H1.
struct PsiVector {
  Eigen::VectorXd psi;

  int size() const { return static_cast<int>(psi.size()); }
};

struct TheoryCurve {
  std::vector<double> thresholds;
  std::vector<double> pfa;
  std::vector<double> pmd;
};

inline Eigen::MatrixXd fisher_info_zero(int M, int N) {
  if (M < 1 || N < 1) throw ConfigError("fisher_info_zero: M and N must be >= 1");
  return (M + 2.0) * Eigen::MatrixXd::Identity(N, N);
}

/// Monte Carlo E[g g^T] of the single-snapshot score g at theta = 0, with
/// z drawn from N(0, I).
template <class URBG>
Eigen::MatrixXd score_outer_product_zero(int M, int N, int draws, URBG& rng) {
  if (draws < 1) throw ConfigError("score_outer_product_zero: draws must be >= 1");
  ThetaVector zero{Eigen::VectorXd::Zero(N)};
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(N, N);
  for (int r = 0; r < draws; ++r) {
    const EnergyMatrix z = sample_gaussian_approx(zero, M, 1, rng);
    const Eigen::VectorXd g = joint_loglik_grad(z, zero).gradient;
    acc.noalias() += g * g.transpose();
  }
  return acc / static_cast<double>(draws);
}

/// 2^-N + sum_{n=1}^N C(N, n) 2^-N F_n(t), F_n the chi-square(n) CDF; 0 for t < 0.
inline double cdf_h0(double t, int N) {
  if (N < 1) throw ConfigError("cdf_h0: N must be >= 1");
  if (std::isnan(t)) throw ConfigError("cdf_h0: t is NaN");
  if (t < 0.0) return 0.0;
  const double log_half_n = -N * std::numbers::ln2;
  double total = std::exp(log_half_n);
  for (int n = 1; n <= N; ++n) {
    const double log_weight =
        std::lgamma(N + 1.0) - std::lgamma(n + 1.0) - std::lgamma(N - n + 1.0) + log_half_n;
    total += std::exp(log_weight) * chi_square_cdf(t, n);
  }
  return std::min(total, 1.0);
}

/// Smallest t with cdf_h0(t, N) = p, by bisection. p at or below the atom
/// 2^-N maps to 0.
inline double quantile_h0(double p, int N) {
  if (N < 1) throw ConfigError("quantile_h0: N must be >= 1");
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("quantile_h0: p must lie in [0, 1)");
  if (p <= std::ldexp(1.0, -N)) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  while (cdf_h0(hi, N) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw NumericalError("quantile_h0: no upper bracket");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f = cdf_h0(mid, N);
    if (std::abs(f - p) < 1e-13) return mid;
    (f < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline PsiVector psi_from_theta(const ThetaVector& theta1, int L, int M) {
  if (!theta1.in_cone()) throw ConfigError("psi_from_theta: theta must be nonnegative");
  if (L < 1 || M < 1) throw ConfigError("psi_from_theta: L and M must be >= 1");
  return PsiVector{std::sqrt(static_cast<double>(L) * (M + 2.0)) * theta1.theta};
}

/// One factor of the H1 characteristic function, E exp(j w {psi + u}_+^2):
///   Phi(-psi) + (s/2) e^{j w psi^2 / (1 - 2jw)} (1 + erf(psi s / sqrt 2)),
///   s = (1 - 2jw)^{-1/2} on the principal branch.
/// The erf term is rewritten through w(iz) = e^{z^2} erfc(z), which keeps every
/// factor bounded for any psi.
inline std::complex<double> cf_h1_factor(double omega, double psi) {
  using C = std::complex<double>;
  const C a{1.0, -2.0 * omega};
  const C s = 1.0 / std::sqrt(a);
  const C expo = C{0.0, omega} * (psi * psi) / a;
  const C z = psi * s / std::numbers::sqrt2;
  const C iz{-z.imag(), z.real()};
  return normal_cdf(-psi) + s * std::exp(expo) -
         0.5 * s * std::exp(-0.5 * psi * psi) * faddeeva_w(iz);
}

/// The same factor written with the complex error function directly. Valid
/// while |Im(psi s / sqrt 2)| stays inside complex_erf's range.
inline std::complex<double> cf_h1_factor_erf(double omega, double psi) {
  using C = std::complex<double>;
  const C a{1.0, -2.0 * omega};
  const C s = 1.0 / std::sqrt(a);
  const C expo = C{0.0, omega} * (psi * psi) / a;
  return normal_cdf(-psi) + 0.5 * s * std::exp(expo) * (1.0 - complex_erf(-psi * s / std::numbers::sqrt2));
}

inline std::complex<double> cf_h1(double omega, const PsiVector& psi) {
  if (!std::isfinite(omega)) throw ConfigError("cf_h1: omega must be finite");
  std::complex<double> out{1.0, 0.0};
  for (Eigen::Index n = 0; n < psi.psi.size(); ++n) out *= cf_h1_factor(omega, psi.psi[n]);
  return out;
}

/// E {psi + u}_+^2 = (1 + psi^2) Phi(psi) + psi phi(psi).
inline double truncated_square_mean(double psi) {
  return (1.0 + psi * psi) * normal_cdf(psi) + psi * normal_pdf(psi);
}

struct InversionOptions {
  double head_end = 20.0;
  double abs_tol = 1e-10;
  int max_tail_cycles = 4000;
};

/// P(sum_n {psi_n + u_n}_+^2 <= t) by Gil-Pelaez inversion of cf_h1 with the
/// atom a = prod Phi(-psi_n) removed from the transform:
///   F(t) = 1/2 + a/2 - (1/pi) int_0^inf Im[e^{-jwt} (Psi(w) - a)] / w dw.
/// [0, head] is integrated adaptively; the oscillatory tail is summed over
/// half periods pi/t and extrapolated with Wynn's epsilon.
inline double cdf_h1(double t, const PsiVector& psi, const InversionOptions& opt = {}) {
  if (std::isnan(t)) throw ConfigError("cdf_h1: t is NaN");
  if (psi.size() < 1) throw ConfigError("cdf_h1: empty psi");
  if (!(psi.psi.array() >= 0.0).all() || !psi.psi.allFinite()) {
    throw ConfigError("cdf_h1: psi must be finite and nonnegative");
  }
  if (t < 0.0) return 0.0;
  double atom = 1.0;
  double mean = 0.0;
  double psi_max = 0.0;
  for (Eigen::Index n = 0; n < psi.psi.size(); ++n) {
    atom *= normal_cdf(-psi.psi[n]);
    mean += truncated_square_mean(psi.psi[n]);
    psi_max = std::max(psi_max, psi.psi[n]);
  }
  if (t == 0.0) return atom;
  // X >= {psi_max + u}_+^2, so F(t) <= Phi(sqrt(t) - psi_max).
  if (normal_cdf(std::sqrt(t) - psi_max) < 1e-13) return 0.0;

  const double slope0 = mean - (1.0 - atom) * t;
  auto integrand = [&](double w) {
    if (w < 1e-9) return slope0;
    const std::complex<double> v = std::polar(1.0, -w * t) * (cf_h1(w, psi) - atom);
    return v.imag() / w;
  };

  const double half_period = std::numbers::pi / t;
  const double head_end = std::max(opt.head_end, 2.0 * half_period);
  const int panels =
      std::clamp(static_cast<int>(std::ceil(head_end / half_period)) + 8, 8, 4000);
  const quad::Estimate head = quad::integrate(integrand, 0.0, head_end, opt.abs_tol, 0.0, panels,
                                              std::max(20000, 4 * panels));
  if (!head.converged) {
    throw NumericalError("cdf_h1: head quadrature did not converge (t=" + std::to_string(t) +
                         ", error=" + std::to_string(head.error) + ")");
  }

  quad::WynnEpsilon wynn;
  double partial = 0.0;
  double lo = head_end;
  int settled = 0;
  bool tail_done = false;
  for (int k = 0; k < opt.max_tail_cycles; ++k) {
    const double hi = lo + half_period;
    const quad::Estimate piece = quad::integrate(integrand, lo, hi, 0.1 * opt.abs_tol, 0.0, 1, 200);
    partial += piece.value;
    wynn.push(partial);
    lo = hi;
    const bool small = wynn.change() < opt.abs_tol || std::abs(piece.value) < 0.01 * opt.abs_tol;
    settled = small ? settled + 1 : 0;
    if (k >= 4 && settled >= 3) {
      tail_done = true;
      break;
    }
  }
  if (!tail_done) {
    throw NumericalError("cdf_h1: tail extrapolation did not settle (t=" + std::to_string(t) +
                         ", last change=" + std::to_string(wynn.change()) + ")");
  }
  const double integral = head.value + wynn.limit();
  const double F = 0.5 + 0.5 * atom - integral / std::numbers::pi;
  return std::clamp(F, 0.0, 1.0);
}

inline TheoryCurve theory_croc(const PsiVector& psi, int N, const std::vector<double>& grid,
                               const InversionOptions& opt = {}) {
  if (psi.size() != N) throw ConfigError("theory_croc: psi size must equal N");
  if (grid.empty()) throw ConfigError("theory_croc: empty threshold grid");
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw ConfigError("theory_croc: threshold grid must be sorted");
  }
  TheoryCurve out;
  out.thresholds = grid;
  out.pfa.reserve(grid.size());
  out.pmd.reserve(grid.size());
  for (double t : grid) {
    out.pfa.push_back(1.0 - cdf_h0(t, N));
    out.pmd.push_back(cdf_h1(t, psi, opt));
  }
  return out;
}

/// Theory CROC with pmd averaged over several channel draws.
inline TheoryCurve theory_croc_averaged(const std::vector<PsiVector>& draws, int N,
                                        const std::vector<double>& grid,
                                        std::vector<double>* pmd_stderr = nullptr,
                                        const InversionOptions& opt = {}) {
  if (draws.empty()) throw ConfigError("theory_croc_averaged: no channel draws");
  TheoryCurve out;
  out.thresholds = grid;
  out.pfa.resize(grid.size());
  out.pmd.assign(grid.size(), 0.0);
  std::vector<double> sq(grid.size(), 0.0);
  for (const PsiVector& psi : draws) {
    const TheoryCurve one = theory_croc(psi, N, grid, opt);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      out.pmd[i] += one.pmd[i];
      sq[i] += one.pmd[i] * one.pmd[i];
      out.pfa[i] = one.pfa[i];
    }
  }
  const double R = static_cast<double>(draws.size());
  if (pmd_stderr) pmd_stderr->assign(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.pmd[i] /= R;
    if (pmd_stderr && draws.size() > 1) {
      const double var = std::max(sq[i] / R - out.pmd[i] * out.pmd[i], 0.0) * R / (R - 1.0);
      (*pmd_stderr)[i] = std::sqrt(var / R);
    }
  }
  return out;
}

/// Draws of sum_n {psi_n + u_n}_+^2.
template <class URBG>
std::vector<double> simulate_truncated_chi2(const PsiVector& psi, int draws, URBG& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> out(draws);
  for (int r = 0; r < draws; ++r) {
    double x = 0.0;
    for (Eigen::Index n = 0; n < psi.psi.size(); ++n) {
      const double v = std::max(psi.psi[n] + gauss(rng), 0.0);
      x += v * v;
    }
    out[r] = x;
  }
  return out;
}

}  // namespace wsnd
