#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "fedbac/errors.hpp"

namespace fedbac {

// One row of the experiment trace.
struct RoundMetrics {
  std::size_t round = 0;
  std::vector<double> per_server_accuracy;
  double distributed_accuracy = 0.0;
  std::vector<double> per_server_loss;
  double global_objective = 0.0;
  std::uint64_t comm_bytes_client_edge = 0;
  std::size_t active_clusters = 0;
  std::size_t cumulative_reassignments = 0;
  std::vector<std::size_t> assignment;       // pi: server -> cluster
  std::vector<std::size_t> selected_counts;  // |S_m^(t)| per server
};

struct FairnessStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double sigma = 0.0;  // population std across servers
};

// Unweighted mean of per-server accuracies.
inline double distributed_accuracy(std::span<const double> per_server) {
  if (per_server.empty()) throw InputError("distributed_accuracy: no servers");
  double sum = 0.0;
  for (double a : per_server) sum += a;
  return sum / static_cast<double>(per_server.size());
}

// Per-server accuracies averaged over the final `window` rounds first, then
// mean/min/max/population-sigma across servers. traces is [round][server].
inline FairnessStats fairness_stats(const std::vector<std::vector<double>>& traces,
                                    std::size_t window = 10) {
  if (traces.empty() || window < 1) throw InputError("fairness_stats: empty trace");
  const std::size_t num_servers = traces.back().size();
  const std::size_t w = std::min(window, traces.size());
  std::vector<double> per_server(num_servers, 0.0);
  for (std::size_t t = traces.size() - w; t < traces.size(); ++t) {
    if (traces[t].size() != num_servers) throw InputError("fairness_stats: ragged trace");
    for (std::size_t m = 0; m < num_servers; ++m) per_server[m] += traces[t][m];
  }
  for (double& a : per_server) a /= static_cast<double>(w);

  FairnessStats out;
  out.min = per_server[0];
  out.max = per_server[0];
  double sum = 0.0;
  for (double a : per_server) {
    sum += a;
    out.min = std::min(out.min, a);
    out.max = std::max(out.max, a);
  }
  out.mean = sum / static_cast<double>(num_servers);
  double sq = 0.0;
  for (double a : per_server) sq += (a - out.mean) * (a - out.mean);
  out.sigma = std::sqrt(sq / static_cast<double>(num_servers));
  return out;
}

// Eq.-(3) objective value: sum_k sum_{m in C_k} (n_m / n) F_m, given the
// already-evaluated per-server losses F_m under each server's assigned model.
inline double global_objective(std::span<const double> per_server_loss,
                               std::span<const std::uint64_t> server_sizes,
                               std::span<const std::size_t> assignment,
                               std::size_t k_max) {
  const std::size_t num_servers = per_server_loss.size();
  if (server_sizes.size() != num_servers || assignment.size() != num_servers) {
    throw InputError("global_objective: size mismatch");
  }
  std::uint64_t n = 0;
  for (std::uint64_t s : server_sizes) n += s;
  if (n == 0) throw InputError("global_objective: zero total size");
  double obj = 0.0;
  for (std::size_t k = 0; k < k_max; ++k) {
    for (std::size_t m = 0; m < num_servers; ++m) {
      if (assignment[m] == k) {
        obj += (static_cast<double>(server_sizes[m]) / static_cast<double>(n)) *
               per_server_loss[m];
      }
    }
  }
  return obj;
}

// Eq.-(4) client-to-edge bytes for one round: every selected client downloads
// and uploads both networks.
inline std::uint64_t comm_cost_round(std::uint64_t selected_total, std::uint64_t d_g,
                                     std::uint64_t d_k, std::uint64_t bytes_per_param) {
  return 2 * (d_g + d_k) * selected_total * bytes_per_param;
}

// T_a / T_b where T_x is the first 1-based round with accuracy >= target;
// absent when either trace never reaches the target.
inline std::optional<double> convergence_ratio(std::span<const double> trace_a,
                                               std::span<const double> trace_b,
                                               double target) {
  if (trace_a.empty() || trace_b.empty()) throw InputError("convergence_ratio: empty trace");
  auto first_reach = [target](std::span<const double> trace) -> std::optional<std::size_t> {
    for (std::size_t t = 0; t < trace.size(); ++t) {
      if (trace[t] >= target) return t + 1;
    }
    return std::nullopt;
  };
  const auto ta = first_reach(trace_a);
  const auto tb = first_reach(trace_b);
  if (!ta || !tb) return std::nullopt;
  return static_cast<double>(*ta) / static_cast<double>(*tb);
}

struct ClusterDynamics {
  std::vector<std::size_t> active_clusters;
  std::vector<std::size_t> cumulative_reassignments;
};

// Nonempty-cluster count per round and the running total of server moves.
inline ClusterDynamics cluster_dynamics(
    const std::vector<std::vector<std::size_t>>& assignment_history) {
  ClusterDynamics out;
  out.active_clusters.reserve(assignment_history.size());
  out.cumulative_reassignments.reserve(assignment_history.size());
  std::size_t cumulative = 0;
  for (std::size_t t = 0; t < assignment_history.size(); ++t) {
    const auto& pi = assignment_history[t];
    out.active_clusters.push_back(std::set<std::size_t>(pi.begin(), pi.end()).size());
    if (t > 0) {
      const auto& prev = assignment_history[t - 1];
      if (prev.size() != pi.size()) throw InputError("cluster_dynamics: ragged history");
      for (std::size_t m = 0; m < pi.size(); ++m) {
        if (pi[m] != prev[m]) ++cumulative;
      }
    }
    out.cumulative_reassignments.push_back(cumulative);
  }
  return out;
}

}  // namespace fedbac
