#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fedbac/aggregation.hpp"
#include "fedbac/datagen.hpp"
#include "fedbac/errors.hpp"
#include "fedbac/linucb.hpp"
#include "fedbac/metrics.hpp"
#include "fedbac/model.hpp"
#include "fedbac/rng.hpp"
#include "fedbac/thompson.hpp"

namespace fedbac {

enum class Method { FedBac, HierFavg, Ifca };

enum class InitAssignment { RoundRobin, Uniform };

struct MethodConfig {
  Method method = Method::FedBac;
  std::size_t k_max = 1;
  double participation = 0.8;
  std::size_t reassign_period = 20;  // tau_re
  std::size_t ts_warmup = 10;        // tau_TS
  double ifca_threshold = 0.95;
  InitAssignment init_assignment = InitAssignment::RoundRobin;
  double alpha_ucb = 0.3;
  double epsilon = 1e-8;

  void validate(std::size_t num_servers) const {
    if (k_max < 1) throw ConfigError("method: k_max must be >= 1");
    if (!(participation > 0.0 && participation <= 1.0)) {
      throw ConfigError("method: participation must be in (0,1]");
    }
    if (reassign_period < 1) throw ConfigError("method: reassign_period must be >= 1");
    switch (method) {
      case Method::FedBac:
        if (k_max > num_servers) {
          throw ConfigError("method: fedbac requires k_max <= number of servers");
        }
        break;
      case Method::HierFavg:
        if (k_max != 1) throw ConfigError("method: hierfavg requires k_max = 1");
        if (participation != 1.0) throw ConfigError("method: hierfavg requires participation = 1.0");
        break;
      case Method::Ifca:
        if (participation != 1.0) throw ConfigError("method: ifca requires participation = 1.0");
        break;
    }
  }
};

struct ClusterAssignment {
  std::vector<std::size_t> cluster_of;  // pi: server -> cluster
  std::vector<std::size_t> tenure;      // tau_m
  std::size_t k_max = 1;

  ClusterAssignment() = default;
  ClusterAssignment(std::size_t num_servers, std::size_t k, InitAssignment init)
      : cluster_of(num_servers), tenure(num_servers, 0), k_max(k) {
    for (std::size_t m = 0; m < num_servers; ++m) {
      cluster_of[m] = init == InitAssignment::RoundRobin ? m % k : 0;
    }
  }

  std::size_t cluster_size(std::size_t k) const {
    return static_cast<std::size_t>(
        std::count(cluster_of.begin(), cluster_of.end(), k));
  }

  std::vector<std::size_t> members(std::size_t k) const {
    std::vector<std::size_t> out;
    for (std::size_t m = 0; m < cluster_of.size(); ++m) {
      if (cluster_of[m] == k) out.push_back(m);
    }
    return out;
  }

  std::size_t active_clusters() const {
    std::size_t count = 0;
    for (std::size_t k = 0; k < k_max; ++k) {
      if (cluster_size(k) > 0) ++count;
    }
    return count;
  }
};

// Immutable description of a run.
struct Experiment {
  MethodConfig method;
  LearnerConfig learner;          // global / baseline network
  LearnerConfig cluster_learner;  // Fed-BAC residual network
  SgdHyperparams hp;
  std::size_t horizon = 0;  // T
  std::uint64_t seed = 0;
  std::uint64_t bytes_per_param = 4;
};

struct RoundState {
  ParamVector global_params;                // theta_global (unused by IFCA)
  std::vector<ParamVector> cluster_params;  // theta_k / IFCA standalone models
  ClusterAssignment assignment;
  LinUcbBank bank;                 // Fed-BAC only
  std::vector<TsState> ts_states;  // Fed-BAC only
  std::size_t round = 0;           // t, 1-based; 0 before the first round
  std::size_t cumulative_reassignments = 0;
};

namespace detail {

inline std::string round_path(std::size_t t) { return "round/" + std::to_string(t); }

inline std::string train_path(std::size_t m, std::size_t i) {
  return "train/s" + std::to_string(m) + "/c" + std::to_string(i);
}

inline std::string select_path(std::size_t m) { return "select/s" + std::to_string(m); }

// Index of the smallest value; ties to the lowest index. skip is excluded
// (pass size() to consider all).
inline std::size_t argmin_except(std::span<const double> values, std::size_t skip) {
  std::size_t best = values.size();
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k == skip) continue;
    if (best == values.size() || values[k] < values[best]) best = k;
  }
  if (best == values.size()) throw InternalError("argmin over empty candidate set");
  return best;
}

}  // namespace detail

inline std::size_t ts_budget(double participation, std::size_t num_clients) {
  return static_cast<std::size_t>(std::floor(participation * static_cast<double>(num_clients)));
}

inline RoundState init_state(const Experiment& exp, const Partition& partition) {
  const std::size_t num_servers = partition.num_servers();
  exp.method.validate(num_servers);
  exp.hp.validate();
  if (exp.learner.num_classes != partition.num_classes) {
    throw ConfigError("experiment: learner num_classes != partition num_classes");
  }
  RngStream root = RngStream::root(exp.seed);
  RoundState state;
  state.assignment = ClusterAssignment(num_servers, exp.method.k_max,
                                       exp.method.init_assignment);
  switch (exp.method.method) {
    case Method::HierFavg: {
      RngStream init = root.child("init/model/0");
      state.global_params = mlp_init(exp.learner, init);
      break;
    }
    case Method::Ifca: {
      state.cluster_params.resize(exp.method.k_max);
      for (std::size_t k = 0; k < exp.method.k_max; ++k) {
        RngStream init = root.child("init/model/" + std::to_string(k));
        state.cluster_params[k] = mlp_init(exp.learner, init);
      }
      break;
    }
    case Method::FedBac: {
      RngStream init = root.child("init/model/0");
      state.global_params = mlp_init(exp.learner, init);
      state.cluster_params.resize(exp.method.k_max);
      for (std::size_t k = 0; k < exp.method.k_max; ++k) {
        RngStream rinit = root.child("init/residual/" + std::to_string(k));
        state.cluster_params[k] = mlp_init(exp.cluster_learner, rinit);
      }
      state.bank = LinUcbBank(num_servers, exp.method.k_max, exp.method.alpha_ucb,
                              exp.method.epsilon);
      state.ts_states.reserve(num_servers);
      for (std::size_t m = 0; m < num_servers; ++m) {
        const std::size_t budget =
            ts_budget(exp.method.participation, partition.num_clients(m));
        if (budget < 1) {
          throw ConfigError("experiment: participation budget is zero for server " +
                            std::to_string(m));
        }
        state.ts_states.emplace_back(partition.num_clients(m), exp.method.ts_warmup, budget);
      }
      break;
    }
  }
  return state;
}

struct EdgeRoundResult {
  AdditiveModel aggregate;
  double accuracy = 0.0;  // a_m^(t): edge aggregate on D_m^test
  std::vector<std::size_t> selected;
};

// Alg. 2: TS selection, local training of both networks from the broadcast
// (theta_global, theta_{k_m}), Eq. (1) aggregation, TS posterior update from
// the single-round accuracy change.
inline EdgeRoundResult edge_round(const Experiment& exp, std::size_t server,
                                  RoundState& state, const Partition& partition,
                                  const RngStream& round_rng) {
  TsState& ts = state.ts_states.at(server);
  RngStream select_rng = round_rng.child(detail::select_path(server));
  EdgeRoundResult result;
  result.selected = ts_select(ts, state.round, select_rng);

  AdditiveModel broadcast;
  broadcast.global_config = exp.learner;
  broadcast.cluster_config = exp.cluster_learner;
  broadcast.global_params = state.global_params;
  broadcast.cluster_params = state.cluster_params[state.assignment.cluster_of[server]];

  std::vector<AdditiveModel> trained;
  std::vector<std::uint64_t> counts;
  trained.reserve(result.selected.size());
  counts.reserve(result.selected.size());
  for (std::size_t i : result.selected) {
    RngStream train_rng = round_rng.child(detail::train_path(server, i));
    trained.push_back(local_sgd(broadcast, partition.client_train[server][i], exp.hp,
                                state.round - 1, train_rng));
    counts.push_back(partition.client_size(server, i));
  }
  result.aggregate = edge_aggregate(trained, counts);
  result.accuracy = evaluate(result.aggregate, partition.server_test[server]).accuracy;

  const double r_ts = result.accuracy - ts.prev_accuracy;
  ts = ts_update(std::move(ts), result.selected, r_ts);
  ts.prev_accuracy = result.accuracy;
  return result;
}

namespace detail {

struct SingleEdgeResult {
  ParamVector aggregate;
  std::vector<std::size_t> selected;
};

// Baseline edge round: full participation, one network.
inline SingleEdgeResult edge_round_single(const Experiment& exp, std::size_t server,
                                          const ParamVector& model,
                                          const Partition& partition, std::size_t round,
                                          const RngStream& round_rng) {
  SingleEdgeResult result;
  result.selected.resize(partition.num_clients(server));
  std::iota(result.selected.begin(), result.selected.end(), std::size_t{0});

  std::vector<ParamVector> trained;
  std::vector<std::uint64_t> counts;
  trained.reserve(result.selected.size());
  for (std::size_t i : result.selected) {
    RngStream train_rng = round_rng.child(train_path(server, i));
    trained.push_back(local_sgd_single(exp.learner, model,
                                       partition.client_train[server][i], exp.hp,
                                       round - 1, train_rng));
    counts.push_back(partition.client_size(server, i));
  }
  std::vector<WeightedContribution> contribs(trained.size());
  for (std::size_t j = 0; j < trained.size(); ++j) contribs[j] = {trained[j], counts[j]};
  result.aggregate = weighted_mean(contribs);
  return result;
}

// End-of-round evaluation of server m's model on its test split.
inline EvalResult server_eval(const Experiment& exp, const RoundState& state,
                              const Partition& partition, std::size_t server) {
  const std::size_t k = state.assignment.cluster_of[server];
  switch (exp.method.method) {
    case Method::HierFavg:
      return evaluate_single(exp.learner, state.global_params, partition.server_test[server]);
    case Method::Ifca:
      return evaluate_single(exp.learner, state.cluster_params[k],
                             partition.server_test[server]);
    case Method::FedBac: {
      AdditiveModel model;
      model.global_config = exp.learner;
      model.cluster_config = exp.cluster_learner;
      model.global_params = state.global_params;
      model.cluster_params = state.cluster_params[k];
      return evaluate(model, partition.server_test[server]);
    }
  }
  throw InternalError("server_eval: unknown method");
}

// F_m: data-weighted mean client train loss under server m's current model.
inline double server_train_objective(const Experiment& exp, const RoundState& state,
                                     const Partition& partition, std::size_t server) {
  const std::size_t k = state.assignment.cluster_of[server];
  double weighted = 0.0;
  const double n_m = static_cast<double>(partition.server_size(server));
  for (std::size_t i = 0; i < partition.num_clients(server); ++i) {
    const Dataset& data = partition.client_train[server][i];
    double loss = 0.0;
    switch (exp.method.method) {
      case Method::HierFavg:
        loss = evaluate_single(exp.learner, state.global_params, data).mean_loss;
        break;
      case Method::Ifca:
        loss = evaluate_single(exp.learner, state.cluster_params[k], data).mean_loss;
        break;
      case Method::FedBac: {
        AdditiveModel model;
        model.global_config = exp.learner;
        model.cluster_config = exp.cluster_learner;
        model.global_params = state.global_params;
        model.cluster_params = state.cluster_params[k];
        loss = evaluate(model, data).mean_loss;
        break;
      }
    }
    weighted += (static_cast<double>(data.size()) / n_m) * loss;
  }
  return weighted;
}

inline RoundMetrics collect_metrics(const Experiment& exp, const RoundState& state,
                                    const Partition& partition,
                                    const std::vector<std::size_t>& selected_counts,
                                    std::uint64_t d_g, std::uint64_t d_k) {
  const std::size_t num_servers = partition.num_servers();
  RoundMetrics rm;
  rm.round = state.round;
  rm.per_server_accuracy.resize(num_servers);
  rm.per_server_loss.resize(num_servers);
  std::vector<double> train_losses(num_servers);
  std::vector<std::uint64_t> sizes(num_servers);
  for (std::size_t m = 0; m < num_servers; ++m) {
    const EvalResult ev = server_eval(exp, state, partition, m);
    rm.per_server_accuracy[m] = ev.accuracy;
    rm.per_server_loss[m] = ev.mean_loss;
    train_losses[m] = server_train_objective(exp, state, partition, m);
    sizes[m] = partition.server_size(m);
  }
  rm.distributed_accuracy = distributed_accuracy(rm.per_server_accuracy);
  rm.global_objective = global_objective(train_losses, sizes,
                                         state.assignment.cluster_of,
                                         state.assignment.k_max);
  std::uint64_t selected_total = 0;
  for (std::size_t s : selected_counts) selected_total += s;
  rm.comm_bytes_client_edge = comm_cost_round(selected_total, d_g, d_k, exp.bytes_per_param);
  rm.active_clusters = state.assignment.active_clusters();
  rm.cumulative_reassignments = state.cumulative_reassignments;
  rm.assignment = state.assignment.cluster_of;
  rm.selected_counts = selected_counts;
  return rm;
}

inline void update_tenure(ClusterAssignment& assignment, const std::vector<bool>& moved) {
  for (std::size_t m = 0; m < assignment.tenure.size(); ++m) {
    assignment.tenure[m] = moved[m] ? 0 : assignment.tenure[m] + 1;
  }
}

}  // namespace detail

// Alg. 1 body for one round: edge rounds, two-phase aggregation, and every
// tau_re rounds the LinUCB reassignment sweep (update current arm, then select
// with the updated parameters; all moves applied synchronously).
inline RoundMetrics cloud_round_fedbac(const Experiment& exp, RoundState& state,
                                       const Partition& partition, const RngStream& root) {
  const std::size_t num_servers = partition.num_servers();
  const std::size_t t = state.round;
  const RngStream round_rng = root.child(detail::round_path(t));

  std::vector<EdgeRoundResult> results;
  results.reserve(num_servers);
  for (std::size_t m = 0; m < num_servers; ++m) {
    results.push_back(edge_round(exp, m, state, partition, round_rng));
  }

  std::vector<ParamVector> server_globals(num_servers);
  std::vector<std::uint64_t> sizes(num_servers);
  for (std::size_t m = 0; m < num_servers; ++m) {
    server_globals[m] = std::move(results[m].aggregate.global_params);
    sizes[m] = partition.server_size(m);
  }
  state.global_params = global_aggregate(server_globals, sizes, num_servers);

  for (std::size_t k = 0; k < exp.method.k_max; ++k) {
    std::vector<ParamVector> members;
    std::vector<std::uint64_t> member_sizes;
    for (std::size_t m = 0; m < num_servers; ++m) {
      if (state.assignment.cluster_of[m] == k) {
        members.push_back(results[m].aggregate.cluster_params);
        member_sizes.push_back(sizes[m]);
      }
    }
    state.cluster_params[k] =
        cluster_aggregate(members, member_sizes, state.cluster_params[k]);
  }

  std::vector<bool> moved(num_servers, false);
  // With a single cluster there is no best alternative; the event is a no-op.
  if (t % exp.method.reassign_period == 0 && exp.method.k_max > 1) {
    std::vector<std::vector<double>> losses(num_servers,
                                            std::vector<double>(exp.method.k_max));
    for (std::size_t m = 0; m < num_servers; ++m) {
      for (std::size_t k = 0; k < exp.method.k_max; ++k) {
        AdditiveModel candidate;
        candidate.global_config = exp.learner;
        candidate.cluster_config = exp.cluster_learner;
        candidate.global_params = state.global_params;
        candidate.cluster_params = state.cluster_params[k];
        losses[m][k] = evaluate(candidate, partition.server_test[m]).mean_loss;
      }
    }
    std::vector<std::size_t> next(num_servers);
    for (std::size_t m = 0; m < num_servers; ++m) {
      const std::size_t k_cur = state.assignment.cluster_of[m];
      const std::size_t k_alt = detail::argmin_except(losses[m], k_cur);
      ServerContext ctx;
      ctx.loss_current = losses[m][k_cur];
      ctx.loss_best_alt = losses[m][k_alt];
      ctx.best_alt_cluster = k_alt;
      ctx.size_current = state.assignment.cluster_size(k_cur);
      ctx.size_alt = state.assignment.cluster_size(k_alt);
      ctx.tenure = state.assignment.tenure[m];
      ctx.round = t;
      ctx.horizon = exp.horizon;
      ctx.reassign_period = exp.method.reassign_period;
      const ContextVector x = extract_features(ctx, state.bank.epsilon);
      const double r = compute_reward(ctx.loss_current, ctx.loss_best_alt, state.bank.epsilon);
      state.bank.arms[m][k_cur] = linucb_update(state.bank.arms[m][k_cur], x, r);
      next[m] = select_cluster(state.bank, m, x);
    }
    for (std::size_t m = 0; m < num_servers; ++m) {
      if (next[m] != state.assignment.cluster_of[m]) {
        state.assignment.cluster_of[m] = next[m];
        moved[m] = true;
        ++state.cumulative_reassignments;
      }
    }
  }
  detail::update_tenure(state.assignment, moved);

  std::vector<std::size_t> selected_counts(num_servers);
  for (std::size_t m = 0; m < num_servers; ++m) selected_counts[m] = results[m].selected.size();
  return detail::collect_metrics(exp, state, partition, selected_counts,
                                 exp.learner.param_count(),
                                 exp.cluster_learner.param_count());
}

// Single global model, full participation, no bandits.
inline RoundMetrics cloud_round_hierfavg(const Experiment& exp, RoundState& state,
                                         const Partition& partition,
                                         const RngStream& root) {
  const std::size_t num_servers = partition.num_servers();
  const RngStream round_rng = root.child(detail::round_path(state.round));
  std::vector<ParamVector> aggregates(num_servers);
  std::vector<std::uint64_t> sizes(num_servers);
  std::vector<std::size_t> selected_counts(num_servers);
  for (std::size_t m = 0; m < num_servers; ++m) {
    auto edge = detail::edge_round_single(exp, m, state.global_params, partition,
                                          state.round, round_rng);
    aggregates[m] = std::move(edge.aggregate);
    sizes[m] = partition.server_size(m);
    selected_counts[m] = edge.selected.size();
  }
  state.global_params = global_aggregate(aggregates, sizes, num_servers);
  detail::update_tenure(state.assignment, std::vector<bool>(num_servers, false));
  return detail::collect_metrics(exp, state, partition, selected_counts,
                                 exp.learner.param_count(), 0);
}

// Isolated per-cluster models with loss-based reassignment under a
// multiplicative improvement threshold.
inline RoundMetrics cloud_round_ifca(const Experiment& exp, RoundState& state,
                                     const Partition& partition, const RngStream& root) {
  const std::size_t num_servers = partition.num_servers();
  const std::size_t t = state.round;
  const RngStream round_rng = root.child(detail::round_path(t));

  std::vector<ParamVector> aggregates(num_servers);
  std::vector<std::uint64_t> sizes(num_servers);
  std::vector<std::size_t> selected_counts(num_servers);
  for (std::size_t m = 0; m < num_servers; ++m) {
    const std::size_t k = state.assignment.cluster_of[m];
    auto edge = detail::edge_round_single(exp, m, state.cluster_params[k], partition,
                                          t, round_rng);
    aggregates[m] = std::move(edge.aggregate);
    sizes[m] = partition.server_size(m);
    selected_counts[m] = edge.selected.size();
  }
  for (std::size_t k = 0; k < exp.method.k_max; ++k) {
    std::vector<ParamVector> members;
    std::vector<std::uint64_t> member_sizes;
    for (std::size_t m = 0; m < num_servers; ++m) {
      if (state.assignment.cluster_of[m] == k) {
        members.push_back(aggregates[m]);
        member_sizes.push_back(sizes[m]);
      }
    }
    state.cluster_params[k] =
        cluster_aggregate(members, member_sizes, state.cluster_params[k]);
  }

  std::vector<bool> moved(num_servers, false);
  if (t % exp.method.reassign_period == 0) {
    std::vector<std::size_t> next(num_servers);
    for (std::size_t m = 0; m < num_servers; ++m) {
      std::vector<double> losses(exp.method.k_max);
      for (std::size_t k = 0; k < exp.method.k_max; ++k) {
        losses[k] = evaluate_single(exp.learner, state.cluster_params[k],
                                    partition.server_test[m])
                        .mean_loss;
      }
      const std::size_t k_cur = state.assignment.cluster_of[m];
      const std::size_t k_best = detail::argmin_except(losses, losses.size());
      next[m] = (k_best != k_cur && losses[k_best] < exp.method.ifca_threshold * losses[k_cur])
                    ? k_best
                    : k_cur;
    }
    for (std::size_t m = 0; m < num_servers; ++m) {
      if (next[m] != state.assignment.cluster_of[m]) {
        state.assignment.cluster_of[m] = next[m];
        moved[m] = true;
        ++state.cumulative_reassignments;
      }
    }
  }
  detail::update_tenure(state.assignment, moved);
  return detail::collect_metrics(exp, state, partition, selected_counts,
                                 exp.learner.param_count(), 0);
}

// Runs T synchronous rounds and records one RoundMetrics per round. The final
// state (for bandit snapshots) is copied out when requested.
inline std::vector<RoundMetrics> run_experiment(const Experiment& exp,
                                                const Partition& partition,
                                                RoundState* final_state = nullptr) {
  if (exp.horizon < 1) throw ConfigError("experiment: horizon must be >= 1");
  RoundState state = init_state(exp, partition);
  const RngStream root = RngStream::root(exp.seed);
  std::vector<RoundMetrics> trace;
  trace.reserve(exp.horizon);
  for (std::size_t t = 1; t <= exp.horizon; ++t) {
    state.round = t;
    switch (exp.method.method) {
      case Method::FedBac:
        trace.push_back(cloud_round_fedbac(exp, state, partition, root));
        break;
      case Method::HierFavg:
        trace.push_back(cloud_round_hierfavg(exp, state, partition, root));
        break;
      case Method::Ifca:
        trace.push_back(cloud_round_ifca(exp, state, partition, root));
        break;
    }
  }
  if (final_state != nullptr) *final_state = std::move(state);
  return trace;
}

}  // namespace fedbac
