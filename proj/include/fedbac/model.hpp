#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fedbac/dataset.hpp"
#include "fedbac/errors.hpp"
#include "fedbac/mlp.hpp"
#include "fedbac/rng.hpp"

namespace fedbac {

struct SgdHyperparams {
  double lr_init = 0.01;
  double lr_decay = 0.995;  // per-round multiplier
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double clip_norm = 1.0;
  std::size_t local_epochs = 5;
  double cluster_l2 = 0.001;  // extra L2 on cluster parameters only
  std::size_t batch_size = 32;

  void validate() const {
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("sgd: lr_decay must be in (0,1]");
    if (!(clip_norm > 0.0)) throw ConfigError("sgd: clip_norm must be positive");
    if (local_epochs < 1) throw ConfigError("sgd: local_epochs must be >= 1");
    if (cluster_l2 < 0.0) throw ConfigError("sgd: cluster_l2 must be >= 0");
    if (lr_init < 0.0) throw ConfigError("sgd: lr_init must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("sgd: weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("sgd: batch_size must be >= 1");
  }
};

// The additive predictor: logits(x) = global(x) + cluster(x).
struct AdditiveModel {
  LearnerConfig global_config;
  LearnerConfig cluster_config;
  ParamVector global_params;
  ParamVector cluster_params;

  void validate() const {
    if (global_config.input_dim != cluster_config.input_dim ||
        global_config.num_classes != cluster_config.num_classes) {
      throw ConfigError("additive model: global and cluster networks disagree on dimensions");
    }
    if (global_params.size() != global_config.param_count() ||
        cluster_params.size() != cluster_config.param_count()) {
      throw ConfigError("additive model: parameter vector length mismatch");
    }
  }
};

inline std::vector<double> forward_additive(const AdditiveModel& model,
                                            std::span<const double> x) {
  model.validate();
  std::vector<double> logits = mlp_logits(model.global_config, model.global_params, x);
  const std::vector<double> residual =
      mlp_logits(model.cluster_config, model.cluster_params, x);
  for (std::size_t c = 0; c < logits.size(); ++c) logits[c] += residual[c];
  return logits;
}

// -log softmax(logits)[label], stabilized by max subtraction.
inline double cross_entropy_loss(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw InputError("cross_entropy_loss: label " + std::to_string(label) +
                     " out of range for " + std::to_string(logits.size()) + " classes");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  return std::log(sum) - (logits[label] - m);
}

namespace detail {

// Writes softmax(logits) - onehot(label) into dlogits; returns the loss.
inline double softmax_delta(std::span<const double> logits, std::size_t label,
                            std::span<double> dlogits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    dlogits[c] = std::exp(logits[c] - m);
    sum += dlogits[c];
  }
  for (std::size_t c = 0; c < logits.size(); ++c) dlogits[c] /= sum;
  const double loss = std::log(sum) - (logits[label] - m);
  dlogits[label] -= 1.0;
  return loss;
}

inline void assert_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InternalError(std::string(what) + ": non-finite value");
  }
}

// One network participating in joint training. extra_l2 is the coefficient of
// an additional ||params||^2 objective term for this network alone.
struct NetSlot {
  const LearnerConfig* cfg;
  ParamVector params;
  double extra_l2 = 0.0;
  ParamVector grad;
  ParamVector velocity;
  MlpWorkspace fwd;
  MlpWorkspace scratch;
};

// Joint gradient of  mean-CE(batch) + sum_j extra_l2_j * ||params_j||^2
// with respect to every slot's parameters. Batch is a set of indices into data.
inline double joint_gradient(std::vector<NetSlot>& nets, const Dataset& data,
                             std::span<const std::size_t> batch) {
  const std::size_t num_classes = nets.front().cfg->num_classes;
  for (auto& net : nets) net.grad.assign(net.params.size(), 0.0);
  std::vector<double> logits(num_classes);
  std::vector<double> dlogits(num_classes);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double loss_sum = 0.0;
  for (std::size_t idx : batch) {
    const LabeledExample& ex = data.examples[idx];
    std::fill(logits.begin(), logits.end(), 0.0);
    for (auto& net : nets) {
      mlp_forward(*net.cfg, net.params, ex.features, net.fwd);
      const auto& out = net.fwd.activations.back();
      for (std::size_t c = 0; c < num_classes; ++c) logits[c] += out[c];
    }
    loss_sum += softmax_delta(logits, ex.label, dlogits);
    for (double& d : dlogits) d *= inv_batch;
    for (auto& net : nets) {
      mlp_backward(*net.cfg, net.params, net.fwd, dlogits, net.grad, net.scratch);
    }
  }
  double objective = loss_sum * inv_batch;
  for (auto& net : nets) {
    if (net.extra_l2 > 0.0) {
      double sq = 0.0;
      for (std::size_t i = 0; i < net.params.size(); ++i) {
        net.grad[i] += 2.0 * net.extra_l2 * net.params[i];
        sq += net.params[i] * net.params[i];
      }
      objective += net.extra_l2 * sq;
    }
  }
  return objective;
}

inline double joint_norm(const std::vector<NetSlot>& nets) {
  double sq = 0.0;
  for (const auto& net : nets) {
    for (double g : net.grad) sq += g * g;
  }
  return std::sqrt(sq);
}

// E epochs of minibatch SGD with momentum over all slots jointly.
// round is the 0-based decay index: lr = lr_init * lr_decay^round.
inline void sgd_train(std::vector<NetSlot>& nets, const Dataset& data,
                      const SgdHyperparams& hp, std::size_t round, RngStream& rng) {
  hp.validate();
  if (data.empty()) throw InputError("local_sgd: empty dataset");
  const double lr = hp.lr_init * std::pow(hp.lr_decay, static_cast<double>(round));
  for (auto& net : nets) net.velocity.assign(net.params.size(), 0.0);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < hp.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t len = std::min(hp.batch_size, order.size() - start);
      joint_gradient(nets, data, std::span(order).subspan(start, len));
      const double norm = joint_norm(nets);
      const double scale = norm > hp.clip_norm ? hp.clip_norm / norm : 1.0;
      for (auto& net : nets) {
        for (std::size_t i = 0; i < net.params.size(); ++i) {
          const double g = net.grad[i] * scale + hp.weight_decay * net.params[i];
          net.velocity[i] = hp.momentum * net.velocity[i] + g;
          net.params[i] -= lr * net.velocity[i];
        }
      }
    }
  }
  for (const auto& net : nets) assert_finite(net.params, "local_sgd");
}

}  // namespace detail

// Clips the concatenated gradient to max_norm; returns the pre-clip norm.
inline double clip_global_norm(std::span<const std::span<double>> parts, double max_norm) {
  double sq = 0.0;
  for (const auto& part : parts) {
    for (double g : part) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& part : parts) {
      for (double& g : part) g *= scale;
    }
  }
  return norm;
}

// E epochs of minibatch SGD jointly over both networks of the additive model.
// The cluster_l2 penalty applies to cluster parameters only; the input model
// is left untouched. round is the 0-based learning-rate decay index.
inline AdditiveModel local_sgd(const AdditiveModel& model, const Dataset& data,
                               const SgdHyperparams& hp, std::size_t round,
                               RngStream& rng) {
  model.validate();
  std::vector<detail::NetSlot> nets(2);
  nets[0].cfg = &model.global_config;
  nets[0].params = model.global_params;
  nets[1].cfg = &model.cluster_config;
  nets[1].params = model.cluster_params;
  nets[1].extra_l2 = hp.cluster_l2;
  detail::sgd_train(nets, data, hp, round, rng);
  AdditiveModel out = model;
  out.global_params = std::move(nets[0].params);
  out.cluster_params = std::move(nets[1].params);
  return out;
}

// Single-network variant used by the non-additive baselines.
inline ParamVector local_sgd_single(const LearnerConfig& cfg, const ParamVector& params,
                                    const Dataset& data, const SgdHyperparams& hp,
                                    std::size_t round, RngStream& rng) {
  std::vector<detail::NetSlot> nets(1);
  nets[0].cfg = &cfg;
  nets[0].params = params;
  detail::sgd_train(nets, data, hp, round, rng);
  return std::move(nets[0].params);
}

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

namespace detail {

template <typename LogitsFn>
EvalResult evaluate_with(const Dataset& data, std::size_t num_classes, LogitsFn&& logits_of) {
  if (data.empty()) throw InputError("evaluate: empty dataset");
  std::size_t correct = 0;
  double loss_sum = 0.0;
  for (const LabeledExample& ex : data.examples) {
    const std::vector<double> logits = logits_of(ex.features);
    std::size_t pred = 0;  // argmax, ties to the lowest class index
    for (std::size_t c = 1; c < num_classes; ++c) {
      if (logits[c] > logits[pred]) pred = c;
    }
    if (pred == ex.label) ++correct;
    loss_sum += cross_entropy_loss(logits, ex.label);
  }
  return {static_cast<double>(correct) / static_cast<double>(data.size()),
          loss_sum / static_cast<double>(data.size())};
}

}  // namespace detail

inline EvalResult evaluate(const AdditiveModel& model, const Dataset& data) {
  model.validate();
  return detail::evaluate_with(data, model.global_config.num_classes,
                               [&](const std::vector<double>& x) {
                                 return forward_additive(model, x);
                               });
}

inline EvalResult evaluate_single(const LearnerConfig& cfg, const ParamVector& params,
                                  const Dataset& data) {
  return detail::evaluate_with(data, cfg.num_classes,
                               [&](const std::vector<double>& x) {
                                 return mlp_logits(cfg, params, x);
                               });
}

// Compares the analytic joint gradient of  mean-CE + cluster_l2*||theta_k||^2
// against central finite differences (step 1e-5) on a random batch. Returns
// the max per-coordinate relative error  |ga - gn| / max(|ga| + |gn|, 1e-3).
inline double gradient_check(const LearnerConfig& cfg, RngStream& rng,
                             std::size_t batch_size = 8, double cluster_l2 = 1e-3) {
  cfg.validate();
  std::vector<detail::NetSlot> nets(2);
  for (auto& net : nets) {
    net.cfg = &cfg;
    net.params = mlp_init(cfg, rng);
    for (double& p : net.params) p += 0.1 * rng.normal();  // randomize biases too
  }
  nets[1].extra_l2 = cluster_l2;

  Dataset batch;
  batch.examples.resize(batch_size);
  for (auto& ex : batch.examples) {
    ex.features.resize(cfg.input_dim);
    for (double& f : ex.features) f = rng.normal();
    ex.label = rng.uniform_index(cfg.num_classes);
  }
  std::vector<std::size_t> all(batch_size);
  std::iota(all.begin(), all.end(), std::size_t{0});

  std::vector<ParamVector> analytic(nets.size());
  detail::joint_gradient(nets, batch, all);
  for (std::size_t j = 0; j < nets.size(); ++j) analytic[j] = nets[j].grad;

  const double h = 1e-5;
  double max_rel = 0.0;
  for (std::size_t j = 0; j < nets.size(); ++j) {
    for (std::size_t i = 0; i < nets[j].params.size(); ++i) {
      const double saved = nets[j].params[i];
      nets[j].params[i] = saved + h;
      const double fp = detail::joint_gradient(nets, batch, all);
      nets[j].params[i] = saved - h;
      const double fm = detail::joint_gradient(nets, batch, all);
      nets[j].params[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double ga = analytic[j][i];
      const double rel = std::abs(ga - numeric) / std::max(std::abs(ga) + std::abs(numeric), 1e-3);
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace fedbac
