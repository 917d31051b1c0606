#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

namespace wsnd::quad {

struct Estimate {
  double value = 0.0;
  double error = 0.0;
  bool converged = false;
  int evaluations = 0;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
inline constexpr std::array<double, 8> kXgk{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& other) const { return error < other.error; }
};

template <class F>
Panel gauss_kronrod15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double f1 = f(center - dx);
    const double f2 = f(center + dx);
    kronrod += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace detail

/// Globally adaptive 15-point Gauss-Kronrod quadrature of f over [a, b],
/// starting from `initial_panels` equal panels and bisecting the panel with
/// the largest error estimate until the total error meets the tolerance.
template <class F>
Estimate integrate(F&& f, double a, double b, double abs_tol, double rel_tol = 0.0,
                   int initial_panels = 1, int max_panels = 20000) {
  Estimate out;
  if (a == b) {
    out.converged = true;
    return out;
  }
  initial_panels = std::max(1, initial_panels);
  std::priority_queue<detail::Panel> heap;
  double total = 0.0;
  double total_err = 0.0;
  const double width = (b - a) / initial_panels;
  for (int i = 0; i < initial_panels; ++i) {
    const double lo = a + i * width;
    const double hi = (i + 1 == initial_panels) ? b : a + (i + 1) * width;
    auto p = detail::gauss_kronrod15(f, lo, hi);
    total += p.value;
    total_err += p.error;
    heap.push(p);
  }
  out.evaluations = 15 * initial_panels;
  while (total_err > std::max(abs_tol, rel_tol * std::abs(total)) &&
         static_cast<int>(heap.size()) < max_panels) {
    const auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {
      heap.push(worst);
      break;
    }
    const auto left = detail::gauss_kronrod15(f, worst.a, mid);
    const auto right = detail::gauss_kronrod15(f, mid, worst.b);
    out.evaluations += 30;
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  // Re-sum to shed the drift of the running updates.
  total = 0.0;
  total_err = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    total_err += heap.top().error;
    heap.pop();
  }
  out.value = total;
  out.error = total_err;
  out.converged = total_err <= std::max(abs_tol, rel_tol * std::abs(total));
  return out;
}

/// Wynn epsilon extrapolation of a sequence of partial sums. Feed sums one
/// at a time; `limit()` is the latest extrapolated value and `change()` the
/// distance between the last two extrapolations.
class WynnEpsilon {
 public:
  void push(double partial_sum) {
    // prev_[k] = eps_k^(m-1-k); next[k] = eps_k^(m-k) for the new sum S_m.
    std::vector<double> next;
    next.reserve(prev_.size() + 1);
    next.push_back(partial_sum);
    const std::size_t depth = std::min(prev_.size(), kMaxDepth);
    for (std::size_t k = 0; k < depth; ++k) {
      const double diff = next[k] - prev_[k];
      if (diff == 0.0 || !std::isfinite(diff)) break;
      const double value = (k == 0 ? 0.0 : prev_[k - 1]) + 1.0 / diff;
      if (!std::isfinite(value)) break;
      next.push_back(value);
    }
    prev_ = std::move(next);
    double best = prev_[0];
    for (std::size_t k = 2; k < prev_.size(); k += 2) best = prev_[k];
    change_ = std::abs(best - limit_);
    limit_ = best;
    ++count_;
  }

  double limit() const { return limit_; }
  double change() const { return change_; }
  int count() const { return count_; }

 private:
  static constexpr std::size_t kMaxDepth = 24;

  std::vector<double> prev_;
  double limit_ = 0.0;
  double change_ = std::numeric_limits<double>::infinity();
  int count_ = 0;
};

}  // namespace wsnd::quad
