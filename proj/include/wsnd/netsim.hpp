#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "wsnd/detectors.hpp"
#include "wsnd/error.hpp"
#include "wsnd/estimators.hpp"
#include "wsnd/model.hpp"

namespace wsnd {

/// Undirected geometric graph over the sensor positions.
struct CommGraph {
  std::vector<std::vector<char>> adjacency;
  std::vector<std::vector<int>> neighbors;

  int nodes() const { return static_cast<int>(adjacency.size()); }
  int degree(int i) const { return static_cast<int>(neighbors[i].size()); }
  std::int64_t edges() const {
    std::int64_t twice = 0;
    for (const auto& nb : neighbors) twice += static_cast<std::int64_t>(nb.size());
    return twice / 2;
  }
};

inline bool is_connected(const CommGraph& g) {
  const int N = g.nodes();
  if (N == 0) return true;
  std::vector<char> seen(N, 0);
  std::deque<int> queue{0};
  seen[0] = 1;
  int reached = 1;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : g.neighbors[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        queue.push_back(v);
      }
    }
  }
  return reached == N;
}

inline CommGraph graph_from_adjacency(std::vector<std::vector<char>> adj) {
  CommGraph g;
  const int N = static_cast<int>(adj.size());
  g.neighbors.assign(N, {});
  for (int i = 0; i < N; ++i) {
    if (static_cast<int>(adj[i].size()) != N) throw ConfigError("adjacency must be square");
    if (adj[i][i]) throw ConfigError("adjacency must not contain self-loops");
    for (int j = 0; j < N; ++j) {
      if (adj[i][j] != adj[j][i]) throw ConfigError("adjacency must be symmetric");
      if (adj[i][j]) g.neighbors[i].push_back(j);
    }
  }
  g.adjacency = std::move(adj);
  if (!is_connected(g)) {
    throw DisconnectedGraphError("communication graph is disconnected; increase the radius");
  }
  return g;
}

/// Nodes i != j are adjacent when their distance is at most `radius`.
inline CommGraph build_comm_graph(const Topology& topo, double radius) {
  if (!(radius > 0.0)) throw ConfigError("build_comm_graph: radius must be > 0");
  const int N = topo.nodes();
  std::vector<std::vector<char>> adj(N, std::vector<char>(N, 0));
  for (int i = 0; i < N; ++i) {
    for (int j = i + 1; j < N; ++j) {
      if (distance(topo.node_positions[i], topo.node_positions[j]) <= radius) {
        adj[i][j] = adj[j][i] = 1;
      }
    }
  }
  return graph_from_adjacency(std::move(adj));
}

enum class Strategy { MAC, PAC, Consensus, FloodingGLRT };

inline constexpr std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::MAC: return "mac";
    case Strategy::PAC: return "pac";
    case Strategy::Consensus: return "consensus";
    case Strategy::FloodingGLRT: return "flooding_glrt";
  }
  return "?";
}

struct ResourceLedger {
  Strategy strategy = Strategy::PAC;
  std::int64_t transmissions = 0;
  std::int64_t channel_uses = 0;
};

struct FusionResult {
  double fused = 0.0;
  ResourceLedger ledger;
  // Consensus: iterations (beta). Flooding: messages per record (N_f). Otherwise 0.
  double beta_or_nf = 0.0;
};

/// Orthogonal channels: every node sends once on its own channel.
inline FusionResult run_pac(const Eigen::VectorXd& local_stats) {
  const auto N = static_cast<std::int64_t>(local_stats.size());
  return {local_stats.sum(), {Strategy::PAC, N, N}, 0.0};
}

/// Synchronous superposition on one shared channel, with optional receiver AWGN.
template <class URBG>
FusionResult run_mac(const Eigen::VectorXd& local_stats, double noise_std, URBG& rng) {
  if (!(noise_std >= 0.0)) throw ConfigError("run_mac: noise_std must be >= 0");
  const auto N = static_cast<std::int64_t>(local_stats.size());
  double fused = local_stats.sum();
  if (noise_std > 0.0) fused += std::normal_distribution<double>(0.0, noise_std)(rng);
  return {fused, {Strategy::MAC, N, 1}, 0.0};
}

inline FusionResult run_mac(const Eigen::VectorXd& local_stats) {
  const auto N = static_cast<std::int64_t>(local_stats.size());
  return {local_stats.sum(), {Strategy::MAC, N, 1}, 0.0};
}

struct ConsensusConfig {
  double tolerance = 1e-8;
  int max_iters = 100000;

  void validate() const {
    if (!(tolerance > 0.0)) throw ConfigError("consensus: tolerance must be > 0");
    if (max_iters < 1) throw ConfigError("consensus: max_iters must be >= 1");
  }
};

/// W_ij = 1 / (1 + max(deg_i, deg_j)) on edges, W_ii = 1 - sum_j W_ij.
inline Eigen::MatrixXd metropolis_weights(const CommGraph& g) {
  const int N = g.nodes();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    for (int j : g.neighbors[i]) {
      W(i, j) = 1.0 / (1.0 + std::max(g.degree(i), g.degree(j)));
    }
    W(i, i) = 1.0 - W.row(i).sum();
  }
  return W;
}

struct ConsensusTrace {
  // |mean(x_k) - mean(x_0)| over every iterate.
  double max_mean_drift = 0.0;
  double final_residual = 0.0;
};

/// Synchronous average consensus x <- W x until every node is within
/// `tolerance` of the true average. fused = N x_0 rescales the agreed
/// average back to the sum. Each iteration costs N broadcasts.
inline FusionResult run_consensus(const Eigen::VectorXd& local_stats, const CommGraph& g,
                                  const ConsensusConfig& cfg, ConsensusTrace* trace = nullptr) {
  cfg.validate();
  const int N = g.nodes();
  if (local_stats.size() != N) throw ConfigError("run_consensus: stats size does not match graph");
  if (!is_connected(g)) throw DisconnectedGraphError("run_consensus: graph is disconnected");
  const Eigen::MatrixXd W = metropolis_weights(g);
  const double target = local_stats.mean();
  Eigen::VectorXd x = local_stats;
  auto residual = [&](const Eigen::VectorXd& v) { return (v.array() - target).abs().maxCoeff(); };
  double res = residual(x);
  double drift = 0.0;
  int it = 0;
  while (res >= cfg.tolerance) {
    if (it == cfg.max_iters) {
      throw NonConvergenceError("run_consensus: iteration cap reached", res);
    }
    x = W * x;
    ++it;
    drift = std::max(drift, std::abs(x.mean() - target));
    res = residual(x);
  }
  if (trace) {
    trace->max_mean_drift = drift;
    trace->final_residual = res;
  }
  const auto n = static_cast<std::int64_t>(N);
  return {N * x[0], {Strategy::Consensus, it * n, it * n}, static_cast<double>(it)};
}

/// Flooding of every record z_n(l) through the graph. A node that learns a
/// record for the first time forwards it on every incident edge, so each
/// record costs 2|E| point-to-point messages. Once all nodes hold the full
/// matrix, the GLRT is computed on it (every node obtains the same value).
inline FusionResult run_flooding_glrt(const EnergyMatrix& data, const CommGraph& g,
                                      const GlobalMleOptions& opt = {}) {
  const int N = g.nodes();
  if (data.nodes() != N) throw ConfigError("run_flooding_glrt: data size does not match graph");
  if (!is_connected(g)) throw DisconnectedGraphError("run_flooding_glrt: graph is disconnected");
  const int L = data.windows();

  // Each record starts at its origin and spreads identically, so one BFS
  // per origin node determines the message count for all its L records.
  std::int64_t messages = 0;
  std::vector<EnergyMatrix> held(N);
  for (int i = 0; i < N; ++i) {
    held[i].M = data.M;
    held[i].z = Eigen::MatrixXd::Constant(N, L, std::numeric_limits<double>::quiet_NaN());
  }
  for (int origin = 0; origin < N; ++origin) {
    std::vector<char> has(N, 0);
    std::deque<int> frontier{origin};
    has[origin] = 1;
    held[origin].z.row(origin) = data.z.row(origin);
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop_front();
      for (int v : g.neighbors[u]) {
        messages += L;
        if (!has[v]) {
          has[v] = 1;
          held[v].z.row(origin) = held[u].z.row(origin);
          frontier.push_back(v);
        }
      }
    }
  }
  for (int i = 0; i < N; ++i) {
    if (!held[i].z.allFinite()) throw NumericalError("run_flooding_glrt: incomplete flood");
  }
  const EnergyMatrix& assembled = held[0];
  const JointLikelihood lik(assembled);
  const GlobalMleResult mle = global_mle(lik, local_mle(summary_moments(assembled), assembled.M), opt);
  const double fused = glrt_statistic(lik, mle.estimate.theta);
  const double records = static_cast<double>(N) * L;
  return {fused, {Strategy::FloodingGLRT, messages, messages}, messages / records};
}

}  // namespace wsnd
