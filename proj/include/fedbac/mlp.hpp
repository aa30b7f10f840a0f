#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedbac/errors.hpp"
#include "fedbac/rng.hpp"

namespace fedbac {

// Flat vector of network weights; the unit of aggregation and transport.
using ParamVector = std::vector<double>;

enum class Activation { Relu };

// Fully-connected classifier architecture: input -> hidden_dims (ReLU) ->
// num_classes linear logits. Parameters pack layer by layer as row-major
// W (out x in) followed by the bias.
struct LearnerConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  Activation activation = Activation::Relu;

  void validate() const {
    if (input_dim < 1) throw ConfigError("learner: input_dim must be >= 1");
    if (num_classes < 2) throw ConfigError("learner: num_classes must be >= 2");
    for (std::size_t h : hidden_dims) {
      if (h < 1) throw ConfigError("learner: hidden dims must be >= 1");
    }
  }

  // Widths of every layer, input first and logits last.
  std::vector<std::size_t> layer_dims() const {
    std::vector<std::size_t> dims;
    dims.reserve(hidden_dims.size() + 2);
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(num_classes);
    return dims;
  }

  std::size_t num_layers() const { return hidden_dims.size() + 1; }

  std::size_t param_count() const {
    const auto dims = layer_dims();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      n += dims[l + 1] * dims[l] + dims[l + 1];
    }
    return n;
  }

  bool operator==(const LearnerConfig&) const = default;
};

// Reusable per-layer activation storage for forward/backward passes.
struct MlpWorkspace {
  std::vector<std::vector<double>> activations;  // activations[0] = input copy
  std::vector<double> delta;
  std::vector<double> delta_prev;

  void resize(const LearnerConfig& cfg) {
    const auto dims = cfg.layer_dims();
    activations.resize(dims.size());
    for (std::size_t l = 0; l < dims.size(); ++l) activations[l].resize(dims[l]);
  }
};

// He-scaled normal init for weights, zero biases.
inline ParamVector mlp_init(const LearnerConfig& cfg, RngStream& rng) {
  cfg.validate();
  ParamVector params(cfg.param_count());
  const auto dims = cfg.layer_dims();
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t fan_in = dims[l];
    const std::size_t fan_out = dims[l + 1];
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < fan_out * fan_in; ++i) {
      params[pos++] = scale * rng.normal();
    }
    pos += fan_out;  // biases stay zero
  }
  return params;
}

// Forward pass; stores every layer's activation in ws for a later backward.
inline void mlp_forward(const LearnerConfig& cfg, std::span<const double> params,
                        std::span<const double> x, MlpWorkspace& ws) {
  if (x.size() != cfg.input_dim) {
    throw ConfigError("mlp_forward: input has " + std::to_string(x.size()) +
                      " features, config expects " + std::to_string(cfg.input_dim));
  }
  if (params.size() != cfg.param_count()) {
    throw ConfigError("mlp_forward: parameter vector length mismatch");
  }
  ws.resize(cfg);
  std::copy(x.begin(), x.end(), ws.activations[0].begin());

  const auto dims = cfg.layer_dims();
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    const bool last = (l + 2 == dims.size());
    const auto& a = ws.activations[l];
    auto& z = ws.activations[l + 1];
    const double* w = params.data() + pos;
    const double* b = params.data() + pos + out * in;
    for (std::size_t j = 0; j < out; ++j) {
      double s = b[j];
      const double* wr = w + j * in;
      for (std::size_t i = 0; i < in; ++i) s += wr[i] * a[i];
      z[j] = (last || s > 0.0) ? s : 0.0;
    }
    pos += out * in + out;
  }
}

inline std::vector<double> mlp_logits(const LearnerConfig& cfg,
                                      std::span<const double> params,
                                      std::span<const double> x) {
  MlpWorkspace ws;
  mlp_forward(cfg, params, x, ws);
  return ws.activations.back();
}

// Backward pass for the forward stored in ws: accumulates d(loss)/d(params)
// into grad given d(loss)/d(logits). ReLU subgradient at 0 is taken as 0.
inline void mlp_backward(const LearnerConfig& cfg, std::span<const double> params,
                         const MlpWorkspace& ws_fwd, std::span<const double> dlogits,
                         std::span<double> grad, MlpWorkspace& ws_scratch) {
  const auto dims = cfg.layer_dims();
  ws_scratch.delta.assign(dlogits.begin(), dlogits.end());

  // Parameter offsets of each layer.
  std::vector<std::size_t> offsets(cfg.num_layers());
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    offsets[l] = pos;
    pos += dims[l + 1] * dims[l] + dims[l + 1];
  }

  auto& delta = ws_scratch.delta;
  auto& delta_prev = ws_scratch.delta_prev;
  for (std::size_t l = cfg.num_layers(); l-- > 0;) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    const auto& a = ws_fwd.activations[l];
    const double* w = params.data() + offsets[l];
    double* gw = grad.data() + offsets[l];
    double* gb = gw + out * in;
    for (std::size_t j = 0; j < out; ++j) {
      const double d = delta[j];
      double* gwr = gw + j * in;
      for (std::size_t i = 0; i < in; ++i) gwr[i] += d * a[i];
      gb[j] += d;
    }
    if (l == 0) break;
    delta_prev.assign(in, 0.0);
    for (std::size_t j = 0; j < out; ++j) {
      const double d = delta[j];
      const double* wr = w + j * in;
      for (std::size_t i = 0; i < in; ++i) delta_prev[i] += wr[i] * d;
    }
    for (std::size_t i = 0; i < in; ++i) {
      if (a[i] <= 0.0) delta_prev[i] = 0.0;  // ReLU mask
    }
    std::swap(delta, delta_prev);
  }
}

}  // namespace fedbac
