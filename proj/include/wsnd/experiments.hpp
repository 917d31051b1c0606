#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "wsnd/detectors.hpp"
#include "wsnd/error.hpp"
#include "wsnd/model.hpp"
#include "wsnd/rng.hpp"
#include "wsnd/theory.hpp"

namespace wsnd {

enum class DataModel { Exact, GaussianApprox };

struct Scenario {
  ModelConfig model;
  ChannelConfig channel;
  std::optional<double> snr_db;  // when unset, model.Es is used as given
  int runs = 10000;
  bool freeze_topology = false;
  DataModel data_model = DataModel::Exact;
  DetectorOptions detector_options;

  void validate() const {
    model.validate();
    channel.validate();
    if (runs < 1) throw ConfigError("scenario: runs must be >= 1");
    if (snr_db && !std::isfinite(*snr_db)) throw ConfigError("scenario: snr_db must be finite");
  }
};

struct TrialRecord {
  DetectorSample h0;
  DetectorSample h1;
  ThetaVector theta1;
};

struct MonteCarloResult {
  std::vector<DetectorSample> h0;
  std::vector<DetectorSample> h1;
  std::vector<ThetaVector> theta1;
  int L = 0;
  int M = 0;
  int N = 0;

  /// GLRT samples whose global MLE hit the iteration cap.
  int excluded(bool hypothesis1) const {
    const auto& v = hypothesis1 ? h1 : h0;
    return static_cast<int>(
        std::count_if(v.begin(), v.end(), [](const DetectorSample& s) { return !s.glrt_converged; }));
  }
  int excluded_total() const { return excluded(false) + excluded(true); }
};

inline int default_jobs() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Runs fn(i) for i in [0, count) on `jobs` workers. The first exception
/// thrown by any worker is rethrown after all workers join.
inline void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  jobs = std::clamp(jobs, 1, std::max(1, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      while (!failed.load(std::memory_order_relaxed)) {
        const int i = next.fetch_add(1);
        if (i >= count) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// One Monte Carlo trial: geometry, channel, source energy from the SNR,
/// then the same detector bank on H0 and H1 data. Streams depend only on
/// (seed, trial), so the outcome is independent of scheduling.
inline TrialRecord run_trial(const Scenario& sc, int trial) {
  const std::uint64_t seed = sc.model.seed;
  const std::uint64_t geo_index = sc.freeze_topology ? 0 : static_cast<std::uint64_t>(trial);
  Rng topo_rng = make_stream(seed, geo_index, Stream::Topology);
  Rng chan_rng = make_stream(seed, trial, Stream::Channel);
  Rng h0_rng = make_stream(seed, trial, Stream::EnergyH0);
  Rng h1_rng = make_stream(seed, trial, Stream::EnergyH1);

  const Topology topo = sample_topology(sc.model.N, sc.channel, topo_rng);
  const ChannelRealization ch = sample_channel(topo, sc.channel, chan_rng);
  ModelConfig mc = sc.model;
  if (sc.snr_db) mc.Es = source_energy_for_snr(ch, *sc.snr_db, mc.N0);

  TrialRecord rec;
  rec.theta1 = theta_from_channel(ch, mc.Es, mc.N0);
  const ThetaVector zero{Eigen::VectorXd::Zero(mc.N)};
  EnergyMatrix d0, d1;
  if (sc.data_model == DataModel::Exact) {
    d0 = simulate_energy(ch, mc, Hypothesis::H0, h0_rng);
    d1 = simulate_energy(ch, mc, Hypothesis::H1, h1_rng);
  } else {
    d0 = sample_gaussian_approx(zero, mc.M, mc.L, h0_rng);
    d1 = sample_gaussian_approx(rec.theta1, mc.M, mc.L, h1_rng);
  }
  rec.h0 = evaluate_detectors(d0, rec.theta1, sc.detector_options);
  rec.h1 = evaluate_detectors(d1, rec.theta1, sc.detector_options);
  return rec;
}

inline MonteCarloResult run_monte_carlo(const Scenario& sc, int jobs = 1) {
  sc.validate();
  MonteCarloResult out;
  out.L = sc.model.L;
  out.M = sc.model.M;
  out.N = sc.model.N;
  out.h0.resize(sc.runs);
  out.h1.resize(sc.runs);
  out.theta1.resize(sc.runs);
  parallel_for(sc.runs, jobs, [&](int i) {
    TrialRecord rec = run_trial(sc, i);
    out.h0[i] = std::move(rec.h0);
    out.h1[i] = std::move(rec.h1);
    out.theta1[i] = std::move(rec.theta1);
  });
  return out;
}

/// Values of one detector; GLRT samples from non-converged MLE runs are dropped
/// (their count is MonteCarloResult::excluded).
inline std::vector<double> collect(const std::vector<DetectorSample>& samples, Detector d) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const DetectorSample& s : samples) {
    if (d == Detector::GLRT && !s.glrt_converged) continue;
    out.push_back(s.value(d));
  }
  return out;
}

/// Factor that maps a detector's native scale to the 2 log T scale of the
/// asymptotic laws: L for the GLRT and LR, 2 for L-MP, 1 otherwise.
inline double asymptotic_scale(Detector d, int L) {
  switch (d) {
    case Detector::GLRT:
    case Detector::LR: return static_cast<double>(L);
    case Detector::LMP: return 2.0;
    default: return 1.0;
  }
}

struct RocPoint {
  double threshold = 0.0;
  double pfa = 0.0;
  double pmd = 0.0;
  double pfa_stderr = 0.0;
  double pmd_stderr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
};

inline double binomial_stderr(double p, std::size_t n) {
  return n == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

/// pfa(t) = #{h0 > t} / n0 and pmd(t) = #{h1 <= t} / n1, swept over a point
/// below every sample, each distinct H0 value, and the H1 extremes.
inline RocCurve empirical_croc(std::vector<double> h0, std::vector<double> h1) {
  if (h0.empty() || h1.empty()) throw ConfigError("empirical_croc: need samples under both hypotheses");
  std::sort(h0.begin(), h0.end());
  std::sort(h1.begin(), h1.end());
  std::vector<double> grid;
  grid.reserve(h0.size() + 3);
  const double lowest = std::min(h0.front(), h1.front());
  grid.push_back(std::nextafter(lowest, -std::numeric_limits<double>::infinity()));
  grid.insert(grid.end(), h0.begin(), h0.end());
  grid.push_back(h1.front());
  grid.push_back(h1.back());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  RocCurve out;
  out.points.reserve(grid.size());
  const double n0 = static_cast<double>(h0.size());
  const double n1 = static_cast<double>(h1.size());
  for (double t : grid) {
    RocPoint p;
    p.threshold = t;
    p.pfa = static_cast<double>(h0.end() - std::upper_bound(h0.begin(), h0.end(), t)) / n0;
    p.pmd = static_cast<double>(std::upper_bound(h1.begin(), h1.end(), t) - h1.begin()) / n1;
    p.pfa_stderr = binomial_stderr(p.pfa, h0.size());
    p.pmd_stderr = binomial_stderr(p.pmd, h1.size());
    out.points.push_back(p);
  }
  return out;
}

struct PmdPoint {
  double pmd = 0.0;
  double threshold = 0.0;
  double pfa = 0.0;
  double pmd_stderr = 0.0;
};

/// Empirical pmd at the smallest H0 sample value t with #{h0 > t}/n0 <= target.
inline PmdPoint pmd_at_pfa(std::vector<double> h0, std::vector<double> h1, double pfa_target) {
  if (!(pfa_target > 0.0 && pfa_target < 1.0)) throw ConfigError("pmd_at_pfa: target must lie in (0, 1)");
  if (h0.empty() || h1.empty()) throw ConfigError("pmd_at_pfa: need samples under both hypotheses");
  std::sort(h0.begin(), h0.end());
  std::sort(h1.begin(), h1.end());
  const double n0 = static_cast<double>(h0.size());
  auto pfa_of = [&](double t) {
    return static_cast<double>(h0.end() - std::upper_bound(h0.begin(), h0.end(), t)) / n0;
  };
  // pfa_of is non-increasing along the sorted samples; the last one always qualifies.
  std::size_t lo = 0, hi = h0.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (pfa_of(h0[mid]) <= pfa_target) hi = mid;
    else lo = mid + 1;
  }
  PmdPoint out;
  out.threshold = h0[lo];
  out.pfa = pfa_of(out.threshold);
  out.pmd = static_cast<double>(std::upper_bound(h1.begin(), h1.end(), out.threshold) - h1.begin()) /
            static_cast<double>(h1.size());
  out.pmd_stderr = binomial_stderr(out.pmd, h1.size());
  return out;
}

/// Fraction of samples <= t.
inline double empirical_cdf_at(const std::vector<double>& sorted, double t) {
  return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin()) /
         static_cast<double>(sorted.size());
}

/// Spreads `count` indices evenly over [0, total).
inline std::vector<int> spread_indices(int total, int count) {
  count = std::clamp(count, 1, std::max(total, 1));
  std::vector<int> idx(count);
  for (int i = 0; i < count; ++i) {
    idx[i] = static_cast<int>((static_cast<long long>(i) * total) / count);
  }
  return idx;
}

struct TheoryPmd {
  double threshold = 0.0;  // on the 2 log T scale
  double pmd = 0.0;
  double pmd_stderr = 0.0;  // spread over channel draws
};

/// Asymptotic threshold from the H0 law and pmd averaged over the given
/// channel draws' truncated chi-square H1 laws.
inline TheoryPmd theory_threshold_pmd(const std::vector<ThetaVector>& theta1_draws, int L, int M,
                                      double pfa_target, const InversionOptions& opt = {}) {
  if (theta1_draws.empty()) throw ConfigError("theory_threshold_pmd: no channel draws");
  if (!(pfa_target > 0.0 && pfa_target < 1.0)) {
    throw ConfigError("theory_threshold_pmd: target must lie in (0, 1)");
  }
  const int N = theta1_draws.front().size();
  TheoryPmd out;
  out.threshold = quantile_h0(1.0 - pfa_target, N);
  double sum = 0.0, sq = 0.0;
  for (const ThetaVector& th : theta1_draws) {
    const double v = cdf_h1(out.threshold, psi_from_theta(th, L, M), opt);
    sum += v;
    sq += v * v;
  }
  const double R = static_cast<double>(theta1_draws.size());
  out.pmd = sum / R;
  if (R > 1) out.pmd_stderr = std::sqrt(std::max(sq / R - out.pmd * out.pmd, 0.0) / (R - 1.0));
  return out;
}

/// |E1 T - E0 T| / sqrt(Var0 T), moments with 1/n normalization.
inline double deflection(const std::vector<double>& h0, const std::vector<double>& h1) {
  if (h0.size() < 2 || h1.empty()) throw ConfigError("deflection: need >= 2 H0 samples and >= 1 H1 sample");
  double m0 = 0.0, m1 = 0.0;
  for (double v : h0) m0 += v;
  for (double v : h1) m1 += v;
  m0 /= static_cast<double>(h0.size());
  m1 /= static_cast<double>(h1.size());
  double var0 = 0.0;
  for (double v : h0) var0 += (v - m0) * (v - m0);
  var0 /= static_cast<double>(h0.size());
  if (!(var0 > 0.0)) throw ConfigError("deflection: H0 samples have zero variance");
  return std::abs(m1 - m0) / std::sqrt(var0);
}

/// sup_t |F_n(t) - F(t)| for a law that is continuous on (0, inf) with
/// possible mass at 0 and none below. Samples must be nonnegative.
inline double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw ConfigError("ks_distance: no samples");
  std::sort(samples.begin(), samples.end());
  if (samples.front() < 0.0) throw ConfigError("ks_distance: samples must be nonnegative");
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  std::size_t i = 0;
  while (i < samples.size()) {
    std::size_t j = i;
    while (j < samples.size() && samples[j] == samples[i]) ++j;
    const double v = samples[i];
    const double F = cdf(v);
    const double F_left = v > 0.0 ? F : 0.0;
    d = std::max({d, std::abs(static_cast<double>(j) / n - F), std::abs(static_cast<double>(i) / n - F_left)});
    i = j;
  }
  return d;
}

inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    const double v = (j == b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

/// Statistics are nonnegative up to rounding; values below 0 are set to 0
/// before comparison with the laws, which have no mass below 0.
inline std::vector<double> to_asymptotic_scale(std::vector<double> v, Detector d, int L) {
  const double k = asymptotic_scale(d, L);
  for (double& x : v) x = std::max(k * x, 0.0);
  return v;
}

struct LawSamples {
  std::vector<double> glrt;  // L (2/L) log T_G
  std::vector<double> lmp;   // 2 log T_L-MP
  int excluded = 0;
  int runs = 0;
};

/// 2 log T of both statistics on data drawn from the Gaussian approximation
/// at a fixed theta. Trial i uses stream (seed, i, purpose).
inline LawSamples simulate_law_samples(const ThetaVector& theta, int M, int L, int runs,
                                       std::uint64_t seed, Stream purpose, int jobs = 1,
                                       const GlobalMleOptions& opt = {}) {
  if (runs < 1) throw ConfigError("simulate_law_samples: runs must be >= 1");
  std::vector<double> g(runs), l(runs);
  std::vector<char> ok(runs, 1);
  parallel_for(runs, jobs, [&](int i) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(i), purpose);
    const EnergyMatrix z = sample_gaussian_approx(theta, M, L, rng);
    const JointLikelihood lik(z);
    const GlobalMleResult mle = global_mle(lik, local_mle(summary_moments(z), M), opt);
    ok[i] = mle.converged ? 1 : 0;
    g[i] = std::max(L * glrt_statistic(lik, mle.estimate.theta), 0.0);
    l[i] = std::max(2.0 * lmp_statistic(z).statistic, 0.0);
  });
  LawSamples out;
  out.runs = runs;
  for (int i = 0; i < runs; ++i) {
    out.lmp.push_back(l[i]);
    if (ok[i]) out.glrt.push_back(g[i]);
    else ++out.excluded;
  }
  return out;
}

}  // namespace wsnd
