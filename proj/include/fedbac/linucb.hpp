#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "fedbac/errors.hpp"

namespace fedbac {

inline constexpr std::size_t kContextDim = 4;

using ContextVector = std::array<double, kContextDim>;

// One disjoint linear arm: A = I + sum of observed x x^T, b = sum of r x.
struct LinUcbArm {
  std::array<double, kContextDim * kContextDim> a_matrix{};
  std::array<double, kContextDim> b_vector{};

  LinUcbArm() {
    for (std::size_t i = 0; i < kContextDim; ++i) a_matrix[i * kContextDim + i] = 1.0;
  }
};

// Per-(server, cluster) arm grid; servers never share arms.
struct LinUcbBank {
  std::vector<std::vector<LinUcbArm>> arms;  // [server][cluster]
  double alpha_ucb = 0.3;
  double epsilon = 1e-8;

  LinUcbBank() = default;
  LinUcbBank(std::size_t num_servers, std::size_t k_max, double alpha, double eps)
      : arms(num_servers, std::vector<LinUcbArm>(k_max)), alpha_ucb(alpha), epsilon(eps) {
    if (alpha_ucb < 0.0) throw ConfigError("linucb: alpha_ucb must be >= 0");
  }

  std::size_t num_servers() const { return arms.size(); }
  std::size_t k_max() const { return arms.empty() ? 0 : arms.front().size(); }
};

// Everything Eq.-(7) needs to build a server's context features.
struct ServerContext {
  double loss_current = 0.0;         // L_m^(k_m)
  double loss_best_alt = 0.0;        // L_m^(k̄_m)
  std::size_t best_alt_cluster = 0;  // k̄_m
  std::size_t size_current = 0;      // |C_{k_m}|
  std::size_t size_alt = 0;          // |C_{k̄_m}|
  std::size_t tenure = 0;            // consecutive rounds in the current cluster
  std::size_t round = 0;             // t
  std::size_t horizon = 0;           // T
  std::size_t reassign_period = 0;   // tau_re
};

// x_m = [ log loss ratio, cluster balance, tenure saturation, training phase ].
inline ContextVector extract_features(const ServerContext& ctx, double epsilon) {
  ContextVector x{};
  x[0] = std::log((ctx.loss_current + epsilon) / (ctx.loss_best_alt + epsilon));
  const double size_sum = static_cast<double>(ctx.size_current + ctx.size_alt);
  x[1] = size_sum > 0.0
             ? (static_cast<double>(ctx.size_current) - static_cast<double>(ctx.size_alt)) /
                   size_sum
             : 0.0;
  const double denom = 2.0 * static_cast<double>(ctx.reassign_period);
  x[2] = denom > 0.0 ? std::min(static_cast<double>(ctx.tenure) / denom, 1.0) : 1.0;
  x[3] = ctx.horizon > 0
             ? static_cast<double>(ctx.round) / static_cast<double>(ctx.horizon)
             : 0.0;
  return x;
}

// Normalized loss ratio reward, bounded in [-1, 1].
inline double compute_reward(double loss_current, double loss_best_alt, double epsilon) {
  return (loss_best_alt - loss_current) / (loss_best_alt + loss_current + epsilon);
}

namespace detail {

// Cholesky solve of the 4x4 SPD system A y = rhs.
struct Cholesky4 {
  std::array<double, kContextDim * kContextDim> lower{};

  explicit Cholesky4(const std::array<double, kContextDim * kContextDim>& a) {
    double max_diag = 0.0;
    double min_diag = 0.0;
    for (std::size_t i = 0; i < kContextDim; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = a[i * kContextDim + j];
        for (std::size_t k = 0; k < j; ++k) {
          s -= lower[i * kContextDim + k] * lower[j * kContextDim + k];
        }
        if (i == j) {
          if (!(s > 0.0)) throw InternalError("linucb: design matrix not positive definite");
          const double d = std::sqrt(s);
          lower[i * kContextDim + i] = d;
          max_diag = i == 0 ? d : std::max(max_diag, d);
          min_diag = i == 0 ? d : std::min(min_diag, d);
        } else {
          lower[i * kContextDim + j] = s / lower[j * kContextDim + j];
        }
      }
    }
    const double cond = (max_diag / min_diag) * (max_diag / min_diag);
    if (cond > 1e12) throw InternalError("linucb: design matrix numerically singular");
  }

  std::array<double, kContextDim> solve(const std::array<double, kContextDim>& rhs) const {
    std::array<double, kContextDim> y{};
    for (std::size_t i = 0; i < kContextDim; ++i) {
      double s = rhs[i];
      for (std::size_t k = 0; k < i; ++k) s -= lower[i * kContextDim + k] * y[k];
      y[i] = s / lower[i * kContextDim + i];
    }
    std::array<double, kContextDim> x{};
    for (std::size_t i = kContextDim; i-- > 0;) {
      double s = y[i];
      for (std::size_t k = i + 1; k < kContextDim; ++k) {
        s -= lower[k * kContextDim + i] * x[k];
      }
      x[i] = s / lower[i * kContextDim + i];
    }
    return x;
  }
};

}  // namespace detail

// theta_hat^T x + alpha_ucb * sqrt(x^T A^-1 x), theta_hat = A^-1 b.
inline double ucb_score(const LinUcbArm& arm, const ContextVector& x, double alpha_ucb) {
  const detail::Cholesky4 chol(arm.a_matrix);
  const auto theta = chol.solve(arm.b_vector);
  const auto ainv_x = chol.solve(x);
  double mean = 0.0;
  double quad = 0.0;
  for (std::size_t i = 0; i < kContextDim; ++i) {
    mean += theta[i] * x[i];
    quad += x[i] * ainv_x[i];
  }
  return mean + alpha_ucb * std::sqrt(std::max(quad, 0.0));
}

// argmax over the server's K_max arms, ties to the lowest cluster index.
inline std::size_t select_cluster(const LinUcbBank& bank, std::size_t server,
                                  const ContextVector& x) {
  const auto& row = bank.arms.at(server);
  std::size_t best = 0;
  double best_score = ucb_score(row[0], x, bank.alpha_ucb);
  for (std::size_t k = 1; k < row.size(); ++k) {
    const double score = ucb_score(row[k], x, bank.alpha_ucb);
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  return best;
}

// Rank-1 update of the current assignment's arm: A += x x^T, b += r x.
inline LinUcbArm linucb_update(LinUcbArm arm, const ContextVector& x, double reward) {
  for (std::size_t i = 0; i < kContextDim; ++i) {
    for (std::size_t j = 0; j < kContextDim; ++j) {
      arm.a_matrix[i * kContextDim + j] += x[i] * x[j];
    }
    arm.b_vector[i] += reward * x[i];
  }
  return arm;
}

inline void to_json(nlohmann::json& j, const LinUcbArm& arm) {
  j = {{"A", arm.a_matrix}, {"b", arm.b_vector}};
}

inline void from_json(const nlohmann::json& j, LinUcbArm& arm) {
  j.at("A").get_to(arm.a_matrix);
  j.at("b").get_to(arm.b_vector);
}

inline void to_json(nlohmann::json& j, const LinUcbBank& bank) {
  j = {{"arms", bank.arms}, {"alpha_ucb", bank.alpha_ucb}, {"epsilon", bank.epsilon}};
}

inline void from_json(const nlohmann::json& j, LinUcbBank& bank) {
  j.at("arms").get_to(bank.arms);
  j.at("alpha_ucb").get_to(bank.alpha_ucb);
  j.at("epsilon").get_to(bank.epsilon);
}

}  // namespace fedbac
