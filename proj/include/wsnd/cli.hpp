#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "wsnd/config.hpp"
#include "wsnd/csv.hpp"
#include "wsnd/detectors.hpp"
#include "wsnd/experiments.hpp"
#include "wsnd/netsim.hpp"
#include "wsnd/svg.hpp"
#include "wsnd/theory.hpp"

namespace wsnd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct CommandOptions {
  std::optional<std::uint64_t> seed;
  int jobs = default_jobs();
};

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string subcommand;
  std::string started;
  std::string finished;
  int excluded_trials = 0;
  std::vector<std::string> outputs;
};

inline std::string iso_utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"config_hash", m.config_hash}, {"seed", m.seed},       {"subcommand", m.subcommand},
          {"started", m.started},         {"finished", m.finished}, {"excluded_trials", m.excluded_trials},
          {"outputs", m.outputs}};
}

namespace detail {

/// Collects outputs of one subcommand and finishes with the manifest.
class OutputSet {
 public:
  OutputSet(std::filesystem::path dir, std::string subcommand, const RunConfig& cfg)
      : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    manifest_.subcommand = std::move(subcommand);
    manifest_.seed = cfg.scenario.model.seed;
    manifest_.config_hash = hex64(fnv1a64(cfg.normalized));
    manifest_.started = iso_utc_now();
  }

  void write(const std::string& name, const std::string& content) {
    write_file_atomic(dir_ / name, content);
    manifest_.outputs.push_back(name);
  }

  void add_excluded(int n) { manifest_.excluded_trials += n; }

  RunManifest finish() {
    manifest_.finished = iso_utc_now();
    write_file_atomic(dir_ / "manifest.json", to_json(manifest_).dump(2) + "\n");
    return manifest_;
  }

 private:
  std::filesystem::path dir_;
  RunManifest manifest_;
};

inline RunConfig prepare(const std::string& config_path, const CommandOptions& opt) {
  RunConfig cfg = load_config(config_path);
  if (opt.seed) cfg.scenario.model.seed = *opt.seed;
  if (opt.jobs < 1) throw ConfigError("--jobs must be >= 1");
  return cfg;
}

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

inline std::vector<ThetaVector> theta_draws(const MonteCarloResult& mc, int count) {
  std::vector<ThetaVector> out;
  for (int i : spread_indices(static_cast<int>(mc.theta1.size()), count)) out.push_back(mc.theta1[i]);
  return out;
}

inline std::vector<PsiVector> psi_draws(const MonteCarloResult& mc, int count) {
  std::vector<PsiVector> out;
  for (const ThetaVector& th : theta_draws(mc, count)) out.push_back(psi_from_theta(th, mc.L, mc.M));
  return out;
}

inline const std::vector<std::string> kCrocHeader{"threshold", "pfa", "pmd", "pfa_stderr", "pmd_stderr"};

/// At most `limit` points kept, always including both ends.
inline Series thin_series(std::string label, const std::vector<double>& x, const std::vector<double>& y,
                          std::size_t limit = 400) {
  Series s;
  s.label = std::move(label);
  const std::size_t n = x.size();
  const std::size_t stride = n > limit ? (n + limit - 1) / limit : 1;
  for (std::size_t i = 0; i < n; i += stride) {
    s.x.push_back(x[i]);
    s.y.push_back(y[i]);
  }
  if (n && (n - 1) % stride) {
    s.x.push_back(x.back());
    s.y.push_back(y.back());
  }
  return s;
}

}  // namespace detail

/// croc_<detector>.csv per selected detector, croc_theory.csv, croc.svg.
inline RunManifest cmd_croc(const std::string& config_path, const std::filesystem::path& out_dir,
                            const CommandOptions& opt = {}) {
  const RunConfig cfg = detail::prepare(config_path, opt);
  detail::OutputSet out(out_dir, "croc", cfg);
  const MonteCarloResult mc = run_monte_carlo(cfg.scenario, opt.jobs);
  out.add_excluded(mc.excluded_total());

  std::vector<Series> plot;
  for (Detector d : cfg.detectors) {
    const RocCurve curve = empirical_croc(collect(mc.h0, d), collect(mc.h1, d));
    CsvWriter w(detail::kCrocHeader);
    std::vector<double> px, py;
    for (const RocPoint& p : curve.points) {
      w.row({p.threshold, p.pfa, p.pmd, p.pfa_stderr, p.pmd_stderr});
      px.push_back(p.pfa);
      py.push_back(p.pmd);
    }
    out.write("croc_" + std::string(detector_name(d)) + ".csv", w.str());
    plot.push_back(detail::thin_series(std::string(detector_name(d)), px, py));
  }

  const int N = cfg.scenario.model.N;
  const std::vector<double> grid =
      detail::linspace(0.0, quantile_h0(1.0 - 1e-4, N), cfg.croc.theory_grid_points);
  std::vector<double> pmd_se;
  const TheoryCurve th =
      theory_croc_averaged(detail::psi_draws(mc, cfg.croc.theory_channel_draws), N, grid, &pmd_se);
  CsvWriter w(detail::kCrocHeader);
  for (std::size_t i = 0; i < grid.size(); ++i) w.row({grid[i], th.pfa[i], th.pmd[i], 0.0, pmd_se[i]});
  out.write("croc_theory.csv", w.str());
  plot.push_back(detail::thin_series("theory", th.pfa, th.pmd));

  if (cfg.croc.plot) {
    out.write("croc.svg", render_line_chart(plot, {"Complementary ROC", "Pfa", "Pmd", true, true}));
  }
  return out.finish();
}

/// pmd_vs_snr.csv: empirical-threshold rows for every selected detector,
/// asymptotic-threshold rows for the GLRT and L-MP samples, and the
/// channel-averaged theory row "glrt_lmp_theory".
inline RunManifest cmd_pmd_vs_snr(const std::string& config_path, const std::filesystem::path& out_dir,
                                  const CommandOptions& opt = {}) {
  const RunConfig cfg = detail::prepare(config_path, opt);
  detail::OutputSet out(out_dir, "pmd-vs-snr", cfg);
  const SweepSettings& sw = cfg.pmd_vs_snr;
  const int N = cfg.scenario.model.N;
  const int L = cfg.scenario.model.L;
  const double t_asym = quantile_h0(1.0 - sw.pfa_target, N);

  CsvWriter w({"snr_db", "detector", "pmd", "pmd_stderr", "threshold_source"});
  std::vector<Series> plot(cfg.detectors.size() + 1);
  for (std::size_t k = 0; k < cfg.detectors.size(); ++k) plot[k].label = detector_name(cfg.detectors[k]);
  plot.back().label = "glrt_lmp_theory";

  for (double snr : sw.snr_db) {
    Scenario sc = cfg.scenario;
    sc.snr_db = snr;
    const MonteCarloResult mc = run_monte_carlo(sc, opt.jobs);
    out.add_excluded(mc.excluded_total());
    for (std::size_t k = 0; k < cfg.detectors.size(); ++k) {
      const Detector d = cfg.detectors[k];
      const PmdPoint p = pmd_at_pfa(collect(mc.h0, d), collect(mc.h1, d), sw.pfa_target);
      w.row({snr, std::string(detector_name(d)), p.pmd, p.pmd_stderr, std::string("empirical")});
      plot[k].x.push_back(snr);
      plot[k].y.push_back(p.pmd);
    }
    for (Detector d : {Detector::GLRT, Detector::LMP}) {
      std::vector<double> h1 = to_asymptotic_scale(collect(mc.h1, d), d, L);
      std::sort(h1.begin(), h1.end());
      const double pmd = empirical_cdf_at(h1, t_asym);
      w.row({snr, std::string(detector_name(d)), pmd, binomial_stderr(pmd, h1.size()),
             std::string("asymptotic")});
    }
    const TheoryPmd tp = theory_threshold_pmd(detail::theta_draws(mc, sw.theory_channel_draws), L,
                                              cfg.scenario.model.M, sw.pfa_target);
    w.row({snr, std::string("glrt_lmp_theory"), tp.pmd, tp.pmd_stderr, std::string("asymptotic")});
    plot.back().x.push_back(snr);
    plot.back().y.push_back(tp.pmd);
  }
  out.write("pmd_vs_snr.csv", w.str());
  if (sw.plot) {
    out.write("pmd_vs_snr.svg",
              render_line_chart(plot, {"Miss detection vs SNR", "SNR [dB]", "Pmd", false, true}));
  }
  return out.finish();
}

/// Gaussian-approximation samples of 2 log T for both statistics, compared
/// with the H0 law (and with the H1 law at theory_check.h1_theta when set).
/// theory_check.csv holds KS distances and the largest CDF gap on the grid;
/// theory_cdf_<h>.csv the CDFs on the grid.
inline RunManifest cmd_theory_check(const std::string& config_path, const std::filesystem::path& out_dir,
                                    const CommandOptions& opt = {}) {
  const RunConfig cfg = detail::prepare(config_path, opt);
  detail::OutputSet out(out_dir, "theory-check", cfg);
  const Scenario& sc = cfg.scenario;
  const int N = sc.model.N, M = sc.model.M, L = sc.model.L;
  const TheoryCheckSettings& tc = cfg.theory_check;
  const std::vector<double> grid = detail::linspace(0.0, tc.grid_max, tc.grid_points);

  CsvWriter summary({"hypothesis", "comparison", "ks_distance", "max_grid_deviation"});
  auto check = [&](const std::string& hyp, const LawSamples& s, const std::function<double(double)>& law,
                   const std::vector<double>& law_on_grid) {
    out.add_excluded(s.excluded);
    std::vector<double> g = s.glrt, l = s.lmp;
    std::sort(g.begin(), g.end());
    std::sort(l.begin(), l.end());
    CsvWriter cdf({"t", "law", "empirical_glrt", "empirical_lmp"});
    double dev_g = 0, dev_l = 0, dev_gl = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double eg = empirical_cdf_at(g, grid[i]);
      const double el = empirical_cdf_at(l, grid[i]);
      cdf.row({grid[i], law_on_grid[i], eg, el});
      dev_g = std::max(dev_g, std::abs(eg - law_on_grid[i]));
      dev_l = std::max(dev_l, std::abs(el - law_on_grid[i]));
      dev_gl = std::max(dev_gl, std::abs(eg - el));
    }
    summary.row({hyp, std::string("glrt_vs_law"), ks_distance(g, law), dev_g});
    summary.row({hyp, std::string("lmp_vs_law"), ks_distance(l, law), dev_l});
    summary.row({hyp, std::string("glrt_vs_lmp"), ks_two_sample(g, l), dev_gl});
    out.write("theory_cdf_" + hyp + ".csv", cdf.str());
  };

  {
    const LawSamples s0 = simulate_law_samples(ThetaVector{Eigen::VectorXd::Zero(N)}, M, L, sc.runs,
                                               sc.model.seed, Stream::EnergyH0, opt.jobs,
                                               sc.detector_options.mle);
    std::vector<double> on_grid;
    for (double t : grid) on_grid.push_back(cdf_h0(t, N));
    check("h0", s0, [N](double t) { return cdf_h0(t, N); }, on_grid);
  }

  if (tc.h1_theta) {
    ThetaVector th{Eigen::Map<const Eigen::VectorXd>(tc.h1_theta->data(), N)};
    const LawSamples s1 = simulate_law_samples(th, M, L, sc.runs, sc.model.seed, Stream::EnergyH1, opt.jobs,
                                               sc.detector_options.mle);
    const PsiVector psi = psi_from_theta(th, L, M);
    std::vector<double> on_grid;
    for (double t : grid) on_grid.push_back(cdf_h1(t, psi));
    // KS against a monotone interpolant of the law on a dense grid.
    double top = tc.grid_max;
    for (double v : s1.glrt) top = std::max(top, v);
    for (double v : s1.lmp) top = std::max(top, v);
    const std::vector<double> dense = detail::linspace(0.0, top, tc.h1_law_grid_points);
    std::vector<double> dense_F;
    for (double t : dense) dense_F.push_back(cdf_h1(t, psi));
    auto law = [&](double t) {
      if (t <= 0.0) return dense_F.front();
      if (t >= dense.back()) return dense_F.back();
      const auto it = std::upper_bound(dense.begin(), dense.end(), t);
      const std::size_t k = static_cast<std::size_t>(it - dense.begin());
      const double u = (t - dense[k - 1]) / (dense[k] - dense[k - 1]);
      return dense_F[k - 1] + u * (dense_F[k] - dense_F[k - 1]);
    };
    check("h1", s1, law, on_grid);
  }
  out.write("theory_check.csv", summary.str());
  return out.finish();
}

/// One detection instance under every cooperation strategy; resources.csv
/// compares each fused value with the centralized statistic it reproduces.
inline RunManifest cmd_netsim(const std::string& config_path, const std::filesystem::path& out_dir,
                              const CommandOptions& opt = {}) {
  const RunConfig cfg = detail::prepare(config_path, opt);
  detail::OutputSet out(out_dir, "netsim", cfg);
  const Scenario& sc = cfg.scenario;
  const std::uint64_t seed = sc.model.seed;
  Rng topo_rng = make_stream(seed, 0, Stream::Topology);
  Rng chan_rng = make_stream(seed, 0, Stream::Channel);
  Rng data_rng = make_stream(seed, 0, cfg.netsim.h1 ? Stream::EnergyH1 : Stream::EnergyH0);
  Rng mac_rng = make_stream(seed, 0, Stream::MacNoise);

  const Topology topo = sample_topology(sc.model.N, sc.channel, topo_rng);
  const CommGraph graph = build_comm_graph(topo, cfg.netsim.radius);
  const ChannelRealization ch = sample_channel(topo, sc.channel, chan_rng);
  ModelConfig mc = sc.model;
  if (sc.snr_db) mc.Es = source_energy_for_snr(ch, *sc.snr_db, mc.N0);
  const EnergyMatrix data = sc.data_model == DataModel::Exact
                                ? simulate_energy(ch, mc, cfg.netsim.h1 ? Hypothesis::H1 : Hypothesis::H0, data_rng)
                                : sample_gaussian_approx(cfg.netsim.h1 ? theta_from_channel(ch, mc.Es, mc.N0)
                                                                       : ThetaVector{Eigen::VectorXd::Zero(mc.N)},
                                                         mc.M, mc.L, data_rng);

  const LmpResult lmp = lmp_statistic(data);
  const FusionResult pac = run_pac(lmp.locals);
  const FusionResult mac = run_mac(lmp.locals, cfg.netsim.mac_noise_std, mac_rng);
  const FusionResult cons = run_consensus(lmp.locals, graph, cfg.netsim.consensus);
  const FusionResult flood = run_flooding_glrt(data, graph, sc.detector_options.mle);
  const JointLikelihood lik(data);
  const GlobalMleResult mle = global_mle(lik, local_mle(summary_moments(data), data.M), sc.detector_options.mle);
  if (!mle.converged) out.add_excluded(1);
  const double glrt_central = glrt_statistic(lik, mle.estimate.theta);

  CsvWriter w({"strategy", "transmissions", "channel_uses", "beta_or_nf", "fused_minus_centralized"});
  auto row = [&](const FusionResult& r, double central) {
    w.row({std::string(strategy_name(r.ledger.strategy)), static_cast<long long>(r.ledger.transmissions),
           static_cast<long long>(r.ledger.channel_uses), r.beta_or_nf, r.fused - central});
  };
  row(mac, lmp.statistic);
  row(pac, lmp.statistic);
  row(cons, lmp.statistic);
  row(flood, glrt_central);
  out.write("resources.csv", w.str());
  return out.finish();
}

/// deflection.csv: D per detector and SNR; rel_diff_glrt_lmp = (D_G - D_LMP) / D_G,
/// repeated on every row of its SNR.
inline RunManifest cmd_deflection(const std::string& config_path, const std::filesystem::path& out_dir,
                                  const CommandOptions& opt = {}) {
  const RunConfig cfg = detail::prepare(config_path, opt);
  detail::OutputSet out(out_dir, "deflection", cfg);
  CsvWriter w({"snr_db", "detector", "D", "rel_diff_glrt_lmp"});
  std::vector<Series> plot(cfg.detectors.size());
  for (std::size_t k = 0; k < cfg.detectors.size(); ++k) plot[k].label = detector_name(cfg.detectors[k]);
  for (double snr : cfg.deflection.snr_db) {
    Scenario sc = cfg.scenario;
    sc.snr_db = snr;
    const MonteCarloResult mc = run_monte_carlo(sc, opt.jobs);
    out.add_excluded(mc.excluded_total());
    const double dg = deflection(collect(mc.h0, Detector::GLRT), collect(mc.h1, Detector::GLRT));
    const double dl = deflection(collect(mc.h0, Detector::LMP), collect(mc.h1, Detector::LMP));
    const double rel = (dg - dl) / dg;
    for (std::size_t k = 0; k < cfg.detectors.size(); ++k) {
      const Detector d = cfg.detectors[k];
      const double D = deflection(collect(mc.h0, d), collect(mc.h1, d));
      w.row({snr, std::string(detector_name(d)), D, rel});
      plot[k].x.push_back(snr);
      plot[k].y.push_back(D);
    }
  }
  out.write("deflection.csv", w.str());
  if (cfg.deflection.plot) {
    out.write("deflection.svg",
              render_line_chart(plot, {"Deflection coefficient", "SNR [dB]", "D", false, true}));
  }
  return out.finish();
}

}  // namespace wsnd
