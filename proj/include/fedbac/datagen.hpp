#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedbac/dataset.hpp"
#include "fedbac/errors.hpp"
#include "fedbac/rng.hpp"

namespace fedbac {

// Length-C proportion vector q ~ Dir(alpha * 1_C), computed by normalizing C
// independent Gamma(alpha, 1) draws.
inline std::vector<double> sample_dirichlet(double alpha, std::size_t num_classes,
                                            RngStream& rng) {
  if (!(alpha > 0.0)) throw InputError("sample_dirichlet: alpha must be positive");
  if (num_classes < 2) throw InputError("sample_dirichlet: need at least 2 classes");
  std::vector<double> q(num_classes);
  double total = 0.0;
  for (double& v : q) {
    v = rng.gamma(alpha);
    total += v;
  }
  if (total <= 0.0) {
    std::fill(q.begin(), q.end(), 1.0 / static_cast<double>(num_classes));
    return q;
  }
  for (double& v : q) v /= total;
  return q;
}

// C isotropic unit-covariance Gaussian clusters with mean norm class_separation,
// exactly samples_per_class examples per class, grouped by class.
inline Dataset synth_mixture(std::size_t num_classes, std::size_t input_dim,
                             std::size_t samples_per_class, double class_separation,
                             RngStream& rng) {
  if (num_classes < 2) throw InputError("synth_mixture: need at least 2 classes");
  if (input_dim < 2) throw InputError("synth_mixture: need input_dim >= 2");
  RngStream mean_rng = rng.child("means");
  std::vector<std::vector<double>> means(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& mu = means[c];
    mu.resize(input_dim);
    double norm = 0.0;
    for (double& v : mu) {
      v = mean_rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    const double scale = norm > 0.0 ? class_separation / norm : 0.0;
    for (double& v : mu) v *= scale;
  }
  Dataset out;
  out.examples.reserve(num_classes * samples_per_class);
  RngStream draw_rng = rng.child("samples");
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      LabeledExample ex;
      ex.label = c;
      ex.features.resize(input_dim);
      for (std::size_t d = 0; d < input_dim; ++d) {
        ex.features[d] = means[c][d] + draw_rng.normal();
      }
      out.examples.push_back(std::move(ex));
    }
  }
  return out;
}

struct PartitionConfig {
  std::size_t num_servers = 4;
  std::size_t clients_per_server = 5;
  double alpha_server = 0.5;
  double alpha_client = 0.5;
  double test_fraction = 0.2;

  void validate() const {
    if (num_servers < 1) throw ConfigError("partition: num_servers must be >= 1");
    if (clients_per_server < 1) throw ConfigError("partition: clients_per_server must be >= 1");
    if (!(alpha_server > 0.0)) throw ConfigError("partition: alpha_server must be positive");
    if (!(alpha_client > 0.0)) throw ConfigError("partition: alpha_client must be positive");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
      throw ConfigError("partition: test_fraction must be in (0,1)");
    }
  }
};

struct Partition {
  std::vector<std::vector<Dataset>> client_train;  // [server][client]
  std::vector<Dataset> server_test;                // [server]
  std::size_t num_classes = 0;

  std::size_t num_servers() const { return client_train.size(); }
  std::size_t num_clients(std::size_t server) const { return client_train[server].size(); }

  std::uint64_t client_size(std::size_t server, std::size_t client) const {
    return client_train[server][client].size();
  }
  // n_m: total train size at server m.
  std::uint64_t server_size(std::size_t server) const {
    std::uint64_t n = 0;
    for (const auto& d : client_train[server]) n += d.size();
    return n;
  }
  std::uint64_t total_size() const {
    std::uint64_t n = 0;
    for (std::size_t m = 0; m < num_servers(); ++m) n += server_size(m);
    return n;
  }
  std::uint64_t total_clients() const {
    std::uint64_t n = 0;
    for (const auto& s : client_train) n += s.size();
    return n;
  }
};

namespace detail {

// Distributes the (already shuffled) per-class index lists across `parts` bins
// with probabilities proportional to each bin's Dirichlet weight for the class,
// renormalized per class.
inline std::vector<std::vector<std::vector<std::size_t>>> split_by_class(
    const std::vector<std::vector<std::size_t>>& class_indices,
    const std::vector<std::vector<double>>& proportions, RngStream& rng) {
  const std::size_t parts = proportions.size();
  const std::size_t num_classes = class_indices.size();
  std::vector<std::vector<std::vector<std::size_t>>> out(
      parts, std::vector<std::vector<std::size_t>>(num_classes));
  std::vector<double> weights(parts);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double total = 0.0;
    for (std::size_t p = 0; p < parts; ++p) {
      weights[p] = proportions[p][c];
      total += weights[p];
    }
    if (!(total > 0.0)) std::fill(weights.begin(), weights.end(), 1.0);
    RngStream draw = rng.child("class/" + std::to_string(c));
    for (std::size_t idx : class_indices[c]) {
      out[draw.categorical(weights)][c].push_back(idx);
    }
  }
  return out;
}

// Largest bin by total count, ties to the lowest index.
inline std::size_t largest_bin(
    const std::vector<std::vector<std::vector<std::size_t>>>& bins) {
  std::size_t best = 0;
  std::size_t best_count = 0;
  for (std::size_t p = 0; p < bins.size(); ++p) {
    std::size_t count = 0;
    for (const auto& lst : bins[p]) count += lst.size();
    if (count > best_count) {
      best_count = count;
      best = p;
    }
  }
  return best;
}

// Moves one sample from bin `from` (its most populous class, ties low) to `to`.
inline void move_one(std::vector<std::vector<std::vector<std::size_t>>>& bins,
                     std::size_t from, std::size_t to) {
  std::size_t cls = 0;
  std::size_t best = 0;
  for (std::size_t c = 0; c < bins[from].size(); ++c) {
    if (bins[from][c].size() > best) {
      best = bins[from][c].size();
      cls = c;
    }
  }
  if (best == 0) throw InternalError("partition guard: donor bin is empty");
  bins[to][cls].push_back(bins[from][cls].back());
  bins[from][cls].pop_back();
}

inline std::size_t bin_count(const std::vector<std::vector<std::size_t>>& bin) {
  std::size_t n = 0;
  for (const auto& lst : bin) n += lst.size();
  return n;
}

}  // namespace detail

// Two-level Dirichlet non-IID partition: per class, pool samples split across
// servers by a multinomial with per-class renormalized server proportions; a
// stratified test fraction is carved out of each server before the same scheme
// recurses over that server's clients.
inline Partition partition_two_level(const Dataset& pool, const PartitionConfig& cfg,
                                     RngStream& rng) {
  cfg.validate();
  if (pool.empty()) throw InputError("partition: empty pool");
  std::size_t num_classes = 0;
  for (const auto& ex : pool.examples) num_classes = std::max(num_classes, ex.label + 1);
  if (num_classes < 2) throw InputError("partition: pool must contain >= 2 classes");
  if (pool.size() < num_classes * cfg.num_servers) {
    throw InputError("partition: pool too small for the requested topology");
  }

  std::vector<std::vector<std::size_t>> class_indices(num_classes);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    class_indices[pool.examples[i].label].push_back(i);
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (class_indices[c].empty()) {
      throw InputError("partition: class " + std::to_string(c) + " absent from pool");
    }
    RngStream sh = rng.child("shuffle/class/" + std::to_string(c));
    sh.shuffle(class_indices[c]);
  }

  std::vector<std::vector<double>> server_props(cfg.num_servers);
  for (std::size_t m = 0; m < cfg.num_servers; ++m) {
    RngStream d = rng.child("dirichlet/server/" + std::to_string(m));
    server_props[m] = sample_dirichlet(cfg.alpha_server, num_classes, d);
  }
  RngStream assign_servers = rng.child("assign/server");
  auto server_bins = detail::split_by_class(class_indices, server_props, assign_servers);

  // Guard: every server must end up with at least one sample per client plus
  // one test sample, or Eq. (1) weights and evaluate() become undefined.
  const std::size_t min_server = cfg.clients_per_server + 1;
  for (std::size_t m = 0; m < cfg.num_servers; ++m) {
    while (detail::bin_count(server_bins[m]) < min_server) {
      const std::size_t donor = detail::largest_bin(server_bins);
      if (donor == m || detail::bin_count(server_bins[donor]) <= min_server) {
        throw InputError("partition: pool too small to give every client a sample");
      }
      detail::move_one(server_bins, donor, m);
    }
  }

  Partition out;
  out.num_classes = num_classes;
  out.client_train.resize(cfg.num_servers);
  out.server_test.resize(cfg.num_servers);

  for (std::size_t m = 0; m < cfg.num_servers; ++m) {
    // Stratified test split, rounded half-up per class, taken before clients.
    std::vector<std::vector<std::size_t>> train_lists(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
      auto& lst = server_bins[m][c];
      std::size_t n_test = static_cast<std::size_t>(
          std::floor(cfg.test_fraction * static_cast<double>(lst.size()) + 0.5));
      n_test = std::min(n_test, lst.size());
      for (std::size_t i = 0; i < n_test; ++i) {
        out.server_test[m].examples.push_back(pool.examples[lst[i]]);
      }
      train_lists[c].assign(lst.begin() + static_cast<std::ptrdiff_t>(n_test), lst.end());
    }
    if (out.server_test[m].empty()) {
      // Rounding can leave a tiny server without a test sample; take one from
      // its most populous class.
      std::size_t cls = 0;
      for (std::size_t c = 0; c < num_classes; ++c) {
        if (train_lists[c].size() > train_lists[cls].size()) cls = c;
      }
      if (train_lists[cls].empty()) throw InternalError("partition: server received no samples");
      out.server_test[m].examples.push_back(pool.examples[train_lists[cls].back()]);
      train_lists[cls].pop_back();
    }

    std::vector<std::vector<double>> client_props(cfg.clients_per_server);
    for (std::size_t i = 0; i < cfg.clients_per_server; ++i) {
      RngStream d = rng.child("dirichlet/client/" + std::to_string(m) + "/" + std::to_string(i));
      client_props[i] = sample_dirichlet(cfg.alpha_client, num_classes, d);
    }
    RngStream assign_clients = rng.child("assign/client/" + std::to_string(m));
    auto client_bins = detail::split_by_class(train_lists, client_props, assign_clients);

    // Empty-client guard: move one sample from the largest same-server client.
    for (std::size_t i = 0; i < cfg.clients_per_server; ++i) {
      while (detail::bin_count(client_bins[i]) == 0) {
        const std::size_t donor = detail::largest_bin(client_bins);
        if (donor == i || detail::bin_count(client_bins[donor]) <= 1) {
          throw InternalError("partition: server guard left a client unservable");
        }
        detail::move_one(client_bins, donor, i);
      }
    }

    out.client_train[m].resize(cfg.clients_per_server);
    for (std::size_t i = 0; i < cfg.clients_per_server; ++i) {
      for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t idx : client_bins[i][c]) {
          out.client_train[m][i].examples.push_back(pool.examples[idx]);
        }
      }
    }
  }
  return out;
}

// Per-client class histograms and counts, for inspection.
inline nlohmann::json partition_manifest(const Partition& p) {
  nlohmann::json servers = nlohmann::json::array();
  for (std::size_t m = 0; m < p.num_servers(); ++m) {
    nlohmann::json clients = nlohmann::json::array();
    for (std::size_t i = 0; i < p.num_clients(m); ++i) {
      std::vector<std::size_t> hist(p.num_classes, 0);
      for (const auto& ex : p.client_train[m][i].examples) ++hist[ex.label];
      clients.push_back({{"client", i},
                         {"num_samples", p.client_size(m, i)},
                         {"class_histogram", hist}});
    }
    std::vector<std::size_t> test_hist(p.num_classes, 0);
    for (const auto& ex : p.server_test[m].examples) ++test_hist[ex.label];
    servers.push_back({{"server", m},
                       {"train_samples", p.server_size(m)},
                       {"test_samples", p.server_test[m].size()},
                       {"test_class_histogram", test_hist},
                       {"clients", clients}});
  }
  return {{"num_classes", p.num_classes},
          {"total_train_samples", p.total_size()},
          {"servers", servers}};
}

}  // namespace fedbac
