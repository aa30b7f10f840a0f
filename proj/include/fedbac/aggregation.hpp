#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedbac/errors.hpp"
#include "fedbac/model.hpp"

namespace fedbac {

struct WeightedContribution {
  std::span<const double> params;
  std::uint64_t weight = 0;  // sample count n_i or n_m
};

// sum_j (w_j / W) * params_j, accumulated left-to-right with Kahan compensation.
inline ParamVector weighted_mean(std::span<const WeightedContribution> contribs) {
  if (contribs.empty()) throw InputError("weighted_mean: no contributions");
  const std::size_t len = contribs.front().params.size();
  std::uint64_t total = 0;
  for (const auto& c : contribs) {
    if (c.params.size() != len) throw ConfigError("weighted_mean: length mismatch");
    total += c.weight;
  }
  if (total == 0) throw InputError("weighted_mean: total weight is zero");

  ParamVector mean(len, 0.0);
  std::vector<double> comp(len, 0.0);
  for (const auto& c : contribs) {
    const double w = static_cast<double>(c.weight) / static_cast<double>(total);
    for (std::size_t i = 0; i < len; ++i) {
      const double term = w * c.params[i] - comp[i];
      const double next = mean[i] + term;
      comp[i] = (next - mean[i]) - term;
      mean[i] = next;
    }
  }
  return mean;
}

// Eq.-(1)-style edge aggregation: both networks averaged with weights
// n_i / n_S over the round's selected clients.
inline AdditiveModel edge_aggregate(std::span<const AdditiveModel> client_models,
                                    std::span<const std::uint64_t> sample_counts) {
  if (client_models.empty()) throw InputError("edge_aggregate: empty selection");
  if (client_models.size() != sample_counts.size()) {
    throw ConfigError("edge_aggregate: model/count size mismatch");
  }
  std::vector<WeightedContribution> globals(client_models.size());
  std::vector<WeightedContribution> clusters(client_models.size());
  for (std::size_t j = 0; j < client_models.size(); ++j) {
    globals[j] = {client_models[j].global_params, sample_counts[j]};
    clusters[j] = {client_models[j].cluster_params, sample_counts[j]};
  }
  AdditiveModel out;
  out.global_config = client_models.front().global_config;
  out.cluster_config = client_models.front().cluster_config;
  out.global_params = weighted_mean(globals);
  out.cluster_params = weighted_mean(clusters);
  return out;
}

// Global aggregation over ALL M servers with weights n_m / n. Weights are
// total server sizes, independent of the round's client selection.
inline ParamVector global_aggregate(std::span<const ParamVector> server_globals,
                                    std::span<const std::uint64_t> server_sizes,
                                    std::size_t num_servers) {
  if (server_globals.size() != num_servers || server_sizes.size() != num_servers) {
    throw ProtocolError("global_aggregate: expected one contribution per server, got " +
                        std::to_string(server_globals.size()) + " of " +
                        std::to_string(num_servers));
  }
  std::vector<WeightedContribution> contribs(num_servers);
  for (std::size_t m = 0; m < num_servers; ++m) {
    contribs[m] = {server_globals[m], server_sizes[m]};
  }
  return weighted_mean(contribs);
}

// Per-cluster aggregation with weights n_m / n_k over member servers; an empty
// cluster keeps its previous parameters.
inline ParamVector cluster_aggregate(std::span<const ParamVector> members,
                                     std::span<const std::uint64_t> member_sizes,
                                     const ParamVector& previous) {
  if (members.empty()) return previous;
  if (members.size() != member_sizes.size()) {
    throw ConfigError("cluster_aggregate: member/size mismatch");
  }
  std::vector<WeightedContribution> contribs(members.size());
  for (std::size_t j = 0; j < members.size(); ++j) {
    contribs[j] = {members[j], member_sizes[j]};
  }
  return weighted_mean(contribs);
}

}  // namespace fedbac
