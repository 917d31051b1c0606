#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "wsnd/error.hpp"

namespace wsnd {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Regularized lower incomplete gamma P(a, x), a > 0.
/// Power series below x = a + 1, Lentz continued fraction for Q above.
inline double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0)) throw ConfigError("regularized_gamma_p: a must be positive");
  if (std::isnan(x)) return x;
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;

  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr int max_iter = 10000;
  const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);

  if (x < a + 1.0) {
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int i = 0; i < max_iter; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) {
        return std::min(1.0, sum * std::exp(log_prefactor));
      }
    }
    throw NumericalError("regularized_gamma_p: series did not converge");
  }

  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= max_iter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) {
      return std::max(0.0, 1.0 - std::exp(log_prefactor) * h);
    }
  }
  throw NumericalError("regularized_gamma_p: continued fraction did not converge");
}

/// Central chi-square CDF with `dof` degrees of freedom.
inline double chi_square_cdf(double t, int dof) {
  if (dof < 1) throw ConfigError("chi_square_cdf: dof must be >= 1");
  if (t <= 0.0) return 0.0;
  return regularized_gamma_p(0.5 * dof, 0.5 * t);
}

/// Faddeeva function w(z) = exp(-z^2) erfc(-iz), all quadrants.
/// Poppe & Wijers power series / Laplace continued fraction / Taylor-CF
/// hybrid, roughly 14 significant digits.
inline std::complex<double> faddeeva_w(std::complex<double> z) {
  constexpr double factor = 1.12837916709551257388;  // 2/sqrt(pi)
  constexpr double rmaxreal = 0.5e154;
  constexpr double rmaxexp = 708.503061461606;
  constexpr double rmaxgoni = 3.53711887601422e15;

  const double xi = z.real();
  const double yi = z.imag();
  const double xabs = std::abs(xi);
  const double yabs = std::abs(yi);
  const double x = xabs / 6.3;
  const double y = yabs / 4.4;

  if (xabs > rmaxreal || yabs > rmaxreal) {
    throw NumericalError("faddeeva_w: argument overflow");
  }

  double qrho = x * x + y * y;
  const double xabsq = xabs * xabs;
  double xquad = xabsq - yabs * yabs;
  const double yquad = 2.0 * xabs * yabs;

  const bool power_series = qrho < 0.085264;
  double u = 0.0, v = 0.0, u2 = 0.0, v2 = 0.0;

  if (power_series) {
    qrho = (1.0 - 0.85 * y) * std::sqrt(qrho);
    const int n = static_cast<int>(std::lround(6.0 + 72.0 * qrho));
    int j = 2 * n + 1;
    double xsum = 1.0 / j;
    double ysum = 0.0;
    for (int i = n; i >= 1; --i) {
      j -= 2;
      const double xaux = (xsum * xquad - ysum * yquad) / i;
      ysum = (xsum * yquad + ysum * xquad) / i;
      xsum = xaux + 1.0 / j;
    }
    const double u1 = -factor * (xsum * yabs + ysum * xabs) + 1.0;
    const double v1 = factor * (xsum * xabs - ysum * yabs);
    const double daux = std::exp(-xquad);
    u2 = daux * std::cos(yquad);
    v2 = -daux * std::sin(yquad);
    u = u1 * u2 - v1 * v2;
    v = u1 * v2 + v1 * u2;
  } else {
    double h = 0.0;
    double h2 = 0.0;
    int kapn = 0;
    int nu = 0;
    if (qrho > 1.0) {
      qrho = std::sqrt(qrho);
      nu = static_cast<int>(3.0 + 1442.0 / (26.0 * qrho + 77.0));
    } else {
      qrho = (1.0 - y) * std::sqrt(1.0 - qrho);
      h = 1.88 * qrho;
      h2 = 2.0 * h;
      kapn = static_cast<int>(std::lround(7.0 + 34.0 * qrho));
      nu = static_cast<int>(std::lround(16.0 + 26.0 * qrho));
    }
    const bool taylor = h > 0.0;
    double qlambda = taylor ? std::pow(h2, kapn) : 0.0;
    double rx = 0.0, ry = 0.0, sx = 0.0, sy = 0.0;
    for (int n = nu; n >= 0; --n) {
      const double np1 = n + 1.0;
      double tx = yabs + h + np1 * rx;
      const double ty = xabs - np1 * ry;
      const double c = 0.5 / (tx * tx + ty * ty);
      rx = c * tx;
      ry = c * ty;
      if (taylor && n <= kapn) {
        tx = qlambda + sx;
        sx = rx * tx - ry * sy;
        sy = ry * tx + rx * sy;
        qlambda /= h2;
      }
    }
    if (!taylor) {
      u = factor * rx;
      v = factor * ry;
    } else {
      u = factor * sx;
      v = factor * sy;
    }
    if (yabs == 0.0) u = std::exp(-xabs * xabs);
  }

  if (yi < 0.0) {
    if (power_series) {
      u2 *= 2.0;
      v2 *= 2.0;
    } else {
      xquad = -xquad;
      if (yquad > rmaxgoni || xquad > rmaxexp) {
        throw NumericalError("faddeeva_w: result overflows in the lower half-plane");
      }
      const double w1 = 2.0 * std::exp(xquad);
      u2 = w1 * std::cos(yquad);
      v2 = -w1 * std::sin(yquad);
    }
    u = u2 - u;
    v = v2 - v;
    if (xi > 0.0) v = -v;
  } else if (xi < 0.0) {
    v = -v;
  }
  return {u, v};
}

/// Maximum |Im z| accepted by complex_erf.
inline constexpr double kComplexErfImagLimit = 50.0;

/// Standard error function erf(z) = 2/sqrt(pi) * int_0^z exp(-u^2) du on
/// the complex plane. Taylor series near the origin, otherwise
/// erf(z) = 1 - exp(-z^2) w(iz) evaluated in the right half-plane.
inline std::complex<double> complex_erf(std::complex<double> z) {
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag()) ||
      std::abs(z.imag()) > kComplexErfImagLimit) {
    throw ConfigError("complex_erf: argument outside |Im z| <= 50");
  }
  if (z.imag() == 0.0) return {std::erf(z.real()), 0.0};
  if (z.real() < 0.0) return -complex_erf(-z);

  if (std::abs(z) < 0.5) {
    // sum_n (-1)^n z^(2n+1) / (n! (2n+1))
    const std::complex<double> z2 = z * z;
    std::complex<double> power = z;
    std::complex<double> sum = z;
    for (int n = 1; n < 40; ++n) {
      power *= -z2 / static_cast<double>(n);
      const std::complex<double> term = power / static_cast<double>(2 * n + 1);
      sum += term;
      if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum * (2.0 / std::sqrt(std::numbers::pi));
  }

  const std::complex<double> iz{-z.imag(), z.real()};
  return 1.0 - std::exp(-z * z) * faddeeva_w(iz);
}

}  // namespace wsnd
