#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include <json.hpp>

#include "fedbac/errors.hpp"
#include "fedbac/rng.hpp"

namespace fedbac {

// Beta(alpha, beta) success/failure pseudo-counts, starting from the uniform prior.
struct BetaPosterior {
  double alpha = 1.0;
  double beta = 1.0;
};

struct TsState {
  std::vector<BetaPosterior> posteriors;  // one per client
  std::size_t warmup = 10;                // tau_TS
  std::size_t budget = 0;                 // B = floor(p * N_m)
  double prev_accuracy = 0.0;             // a_m^(t-1); 0 before the first round

  TsState() = default;
  TsState(std::size_t num_clients, std::size_t warmup_rounds, std::size_t b)
      : posteriors(num_clients), warmup(warmup_rounds), budget(b) {
    if (budget > num_clients) throw ConfigError("ts: budget exceeds client count");
  }

  std::size_t num_clients() const { return posteriors.size(); }
};

// Budget-B client selection: uniform random during warmup rounds, afterwards
// the B highest Beta posterior samples (ties to the lowest client index).
// Returns sorted indices. A full budget selects everyone without drawing.
inline std::vector<std::size_t> ts_select(const TsState& state, std::size_t round,
                                          RngStream& rng) {
  const std::size_t n = state.num_clients();
  if (state.budget > n) throw InputError("ts_select: budget exceeds client count");
  if (state.budget >= n) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  if (round <= state.warmup) {
    return rng.sample_without_replacement(n, state.budget);
  }
  std::vector<std::pair<double, std::size_t>> sampled(n);
  for (std::size_t i = 0; i < n; ++i) {
    sampled[i] = {rng.beta(state.posteriors[i].alpha, state.posteriors[i].beta), i};
  }
  std::sort(sampled.begin(), sampled.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::size_t> picked(state.budget);
  for (std::size_t j = 0; j < state.budget; ++j) picked[j] = sampled[j].second;
  std::sort(picked.begin(), picked.end());
  return picked;
}

// Soft collective update: Delta = min(10*|r|, 2); r > 0 feeds alpha of every
// selected client, r <= 0 feeds beta. Unselected clients are untouched.
inline TsState ts_update(TsState state, std::span<const std::size_t> selected,
                         double r_ts) {
  if (!std::isfinite(r_ts)) throw InputError("ts_update: non-finite reward");
  const double delta = std::min(10.0 * std::abs(r_ts), 2.0);
  for (std::size_t i : selected) {
    auto& post = state.posteriors.at(i);
    if (r_ts > 0.0) {
      post.alpha += delta;
    } else {
      post.beta += delta;
    }
  }
  return state;
}

inline void to_json(nlohmann::json& j, const BetaPosterior& p) {
  j = {{"alpha", p.alpha}, {"beta", p.beta}};
}

inline void from_json(const nlohmann::json& j, BetaPosterior& p) {
  j.at("alpha").get_to(p.alpha);
  j.at("beta").get_to(p.beta);
}

inline void to_json(nlohmann::json& j, const TsState& s) {
  j = {{"posteriors", s.posteriors},
       {"warmup", s.warmup},
       {"budget", s.budget},
       {"prev_accuracy", s.prev_accuracy}};
}

inline void from_json(const nlohmann::json& j, TsState& s) {
  j.at("posteriors").get_to(s.posteriors);
  j.at("warmup").get_to(s.warmup);
  j.at("budget").get_to(s.budget);
  j.at("prev_accuracy").get_to(s.prev_accuracy);
}

}  // namespace fedbac
