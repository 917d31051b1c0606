#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "wsnd/detectors.hpp"
#include "wsnd/error.hpp"
#include "wsnd/experiments.hpp"
#include "wsnd/netsim.hpp"

namespace wsnd {

inline constexpr int kConfigVersion = 1;

struct CrocSettings {
  int theory_grid_points = 64;
  int theory_channel_draws = 100;
  bool plot = true;
};

struct SweepSettings {
  std::vector<double> snr_db;
  double pfa_target = 0.1;
  int theory_channel_draws = 100;
  bool plot = true;
};

struct TheoryCheckSettings {
  std::optional<std::vector<double>> h1_theta;
  int grid_points = 121;
  double grid_max = 60.0;
  int h1_law_grid_points = 512;
};

struct NetsimSettings {
  double radius = 1000.0;
  double mac_noise_std = 0.0;
  bool h1 = true;
  ConsensusConfig consensus;
};

/// Parsed and validated configuration. `normalized` holds the input as
/// canonical JSON (sorted keys, no whitespace), the basis of the manifest hash.
struct RunConfig {
  Scenario scenario;
  std::vector<Detector> detectors{kAllDetectors.begin(), kAllDetectors.end()};
  CrocSettings croc;
  SweepSettings pmd_vs_snr{{-14, -13, -12, -11, -10, -9, -8, -7, -6}};
  SweepSettings deflection{{-14, -13, -12, -11, -10, -9, -8}};
  TheoryCheckSettings theory_check;
  NetsimSettings netsim;
  std::string normalized;
};

/// Linear noise level from a density in dBm/Hz over bandwidth W [Hz].
inline double noise_power_linear(double n0_dbm_per_hz, double bandwidth_hz) {
  return std::pow(10.0, (n0_dbm_per_hz - 30.0) / 10.0) * bandwidth_hz;
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

using nlohmann::json;

/// Object view that records which keys were read; finish() rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) { seen_.insert(key); return j_.at(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  void read_int(const std::string& key, int& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(path_ + "." + key + ": expected an integer");
    out = v.get<int>();
  }

  std::optional<Section> child(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return Section(j_.at(key), path_ + "." + key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_sweep(Section& s, SweepSettings& out) {
  s.read("snr_db", out.snr_db);
  s.read("pfa_target", out.pfa_target);
  s.read_int("theory_channel_draws", out.theory_channel_draws);
  s.read("plot", out.plot);
  s.finish();
  if (out.snr_db.empty()) throw ConfigError(s.path() + ".snr_db: must not be empty");
  if (!(out.pfa_target > 0.0 && out.pfa_target < 1.0)) {
    throw ConfigError(s.path() + ".pfa_target: must lie in (0, 1)");
  }
  if (out.theory_channel_draws < 1) throw ConfigError(s.path() + ".theory_channel_draws: must be >= 1");
}

}  // namespace detail

/// Defaults: N = 10, runs = 10^4, the default channel and a noise density of -174 dBm/Hz over 5 MHz.
inline RunConfig parse_config(const nlohmann::json& root) {
  using detail::Section;
  RunConfig cfg;
  Scenario& sc = cfg.scenario;
  sc.model.N0 = noise_power_linear(-174.0, 5e6);

  Section top(root, "config");
  if (!top.has("version")) throw ConfigError("config: missing 'version'");
  if (!root.at("version").is_number_integer() || root.at("version").get<int>() != kConfigVersion) {
    throw ConfigError("config: unsupported version (expected " + std::to_string(kConfigVersion) + ")");
  }
  if (top.has("seed")) {
    const auto& v = root.at("seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError("config.seed: expected a nonnegative integer");
    }
    sc.model.seed = v.get<std::uint64_t>();
  }

  if (auto m = top.child("model")) {
    m->read_int("N", sc.model.N);
    m->read_int("M", sc.model.M);
    m->read_int("L", sc.model.L);
    double n0_dbm = -174.0, bandwidth = 5e6;
    m->read("N0_dBm_per_Hz", n0_dbm);
    m->read("bandwidth_Hz", bandwidth);
    if (!(bandwidth > 0.0)) throw ConfigError("config.model.bandwidth_Hz: must be > 0");
    sc.model.N0 = noise_power_linear(n0_dbm, bandwidth);
    m->read("Es", sc.model.Es);
    if (m->has("source_kind")) {
      std::string kind;
      m->read("source_kind", kind);
      if (kind == "gaussian") sc.model.source_kind = SourceKind::GaussianCircular;
      else if (kind == "qam16") sc.model.source_kind = SourceKind::Qam16;
      else throw ConfigError("config.model.source_kind: expected 'gaussian' or 'qam16'");
    }
    m->finish();
  }

  if (auto c = top.child("channel")) {
    c->read("K_dB", sc.channel.K_dB);
    c->read("alpha", sc.channel.alpha);
    c->read("d0", sc.channel.d0);
    c->read("sigma_eta_dB", sc.channel.sigma_eta);
    c->read("area_side", sc.channel.area_side);
    if (c->has("source_position")) {
      std::vector<double> p;
      c->read("source_position", p);
      if (p.size() != 2) throw ConfigError("config.channel.source_position: expected [x, y]");
      sc.channel.source_position = {p[0], p[1]};
    }
    c->finish();
  }

  sc.snr_db = -11.0;
  if (auto s = top.child("scenario")) {
    s->read_int("runs", sc.runs);
    if (s->has("snr_db")) {
      const auto& v = s->at("snr_db");
      if (v.is_null()) sc.snr_db.reset();
      else if (v.is_number()) sc.snr_db = v.get<double>();
      else throw ConfigError("config.scenario.snr_db: expected a number or null");
    }
    s->read("freeze_topology", sc.freeze_topology);
    if (s->has("data_model")) {
      std::string dm;
      s->read("data_model", dm);
      if (dm == "exact") sc.data_model = DataModel::Exact;
      else if (dm == "gaussian") sc.data_model = DataModel::GaussianApprox;
      else throw ConfigError("config.scenario.data_model: expected 'exact' or 'gaussian'");
    }
    if (s->has("detectors")) {
      std::vector<std::string> names;
      s->read("detectors", names);
      if (names.empty()) throw ConfigError("config.scenario.detectors: must not be empty");
      cfg.detectors.clear();
      for (const auto& n : names) {
        const auto d = parse_detector(n);
        if (!d) throw ConfigError("config.scenario.detectors: unknown detector '" + n + "'");
        cfg.detectors.push_back(*d);
      }
    }
    if (s->has("covariance")) {
      std::string cov;
      s->read("covariance", cov);
      if (cov == "uncentered") sc.detector_options.covariance = CovarianceMode::Uncentered;
      else if (cov == "centered") sc.detector_options.covariance = CovarianceMode::Centered;
      else throw ConfigError("config.scenario.covariance: expected 'uncentered' or 'centered'");
    }
    s->finish();
  }

  if (auto m = top.child("mle")) {
    m->read_int("max_iters", sc.detector_options.mle.max_iters);
    m->read("tolerance", sc.detector_options.mle.tolerance);
    m->finish();
    if (sc.detector_options.mle.max_iters < 1) throw ConfigError("config.mle.max_iters: must be >= 1");
    if (!(sc.detector_options.mle.tolerance > 0.0)) throw ConfigError("config.mle.tolerance: must be > 0");
  }

  if (auto c = top.child("croc")) {
    c->read_int("theory_grid_points", cfg.croc.theory_grid_points);
    c->read_int("theory_channel_draws", cfg.croc.theory_channel_draws);
    c->read("plot", cfg.croc.plot);
    c->finish();
    if (cfg.croc.theory_grid_points < 2) throw ConfigError("config.croc.theory_grid_points: must be >= 2");
    if (cfg.croc.theory_channel_draws < 1) throw ConfigError("config.croc.theory_channel_draws: must be >= 1");
  }

  if (auto p = top.child("pmd_vs_snr")) detail::read_sweep(*p, cfg.pmd_vs_snr);
  if (auto d = top.child("deflection")) detail::read_sweep(*d, cfg.deflection);

  if (auto t = top.child("theory_check")) {
    if (t->has("h1_theta")) {
      std::vector<double> th;
      t->read("h1_theta", th);
      cfg.theory_check.h1_theta = th;
    }
    t->read_int("grid_points", cfg.theory_check.grid_points);
    t->read("grid_max", cfg.theory_check.grid_max);
    t->read_int("h1_law_grid_points", cfg.theory_check.h1_law_grid_points);
    t->finish();
    if (cfg.theory_check.grid_points < 2) throw ConfigError("config.theory_check.grid_points: must be >= 2");
    if (!(cfg.theory_check.grid_max > 0.0)) throw ConfigError("config.theory_check.grid_max: must be > 0");
    if (cfg.theory_check.h1_law_grid_points < 16) {
      throw ConfigError("config.theory_check.h1_law_grid_points: must be >= 16");
    }
  }

  if (auto n = top.child("netsim")) {
    n->read("radius", cfg.netsim.radius);
    n->read("mac_noise_std", cfg.netsim.mac_noise_std);
    if (n->has("hypothesis")) {
      std::string h;
      n->read("hypothesis", h);
      if (h == "h0") cfg.netsim.h1 = false;
      else if (h == "h1") cfg.netsim.h1 = true;
      else throw ConfigError("config.netsim.hypothesis: expected 'h0' or 'h1'");
    }
    if (auto c = n->child("consensus")) {
      c->read("tolerance", cfg.netsim.consensus.tolerance);
      c->read_int("max_iters", cfg.netsim.consensus.max_iters);
      c->finish();
    }
    n->finish();
    if (!(cfg.netsim.radius > 0.0)) throw ConfigError("config.netsim.radius: must be > 0");
    if (!(cfg.netsim.mac_noise_std >= 0.0)) throw ConfigError("config.netsim.mac_noise_std: must be >= 0");
    cfg.netsim.consensus.validate();
  }

  top.finish();
  sc.validate();
  if (cfg.theory_check.h1_theta) {
    const auto& th = *cfg.theory_check.h1_theta;
    if (static_cast<int>(th.size()) != sc.model.N) {
      throw ConfigError("config.theory_check.h1_theta: length must equal model.N");
    }
    for (double v : th) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("config.theory_check.h1_theta: entries must be >= 0");
    }
  }
  cfg.normalized = root.dump();
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(root);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace wsnd
