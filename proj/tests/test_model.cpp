#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fedbac/model.hpp"

using fedbac::AdditiveModel;
using fedbac::Dataset;
using fedbac::LearnerConfig;
using fedbac::ParamVector;
using fedbac::RngStream;
using fedbac::SgdHyperparams;

namespace {

// Independent straight-line interpreter: unpacks the flat parameter vector
// into explicit per-layer matrices, then evaluates neuron by neuron.
std::vector<double> naive_forward(const LearnerConfig& cfg, const ParamVector& params,
                                  const std::vector<double>& x) {
  const auto dims = cfg.layer_dims();
  std::vector<std::vector<std::vector<double>>> weights;
  std::vector<std::vector<double>> biases;
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    std::vector<std::vector<double>> w(dims[l + 1], std::vector<double>(dims[l]));
    for (std::size_t j = 0; j < dims[l + 1]; ++j) {
      for (std::size_t i = 0; i < dims[l]; ++i) w[j][i] = params[pos++];
    }
    std::vector<double> b(dims[l + 1]);
    for (std::size_t j = 0; j < dims[l + 1]; ++j) b[j] = params[pos++];
    weights.push_back(w);
    biases.push_back(b);
  }
  std::vector<double> a = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    std::vector<double> z(biases[l]);
    for (std::size_t j = 0; j < z.size(); ++j) {
      for (std::size_t i = 0; i < a.size(); ++i) z[j] += weights[l][j][i] * a[i];
    }
    if (l + 1 < weights.size()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    a = z;
  }
  return a;
}

AdditiveModel make_model(const LearnerConfig& cfg, ParamVector global, ParamVector cluster) {
  AdditiveModel m;
  m.global_config = cfg;
  m.cluster_config = cfg;
  m.global_params = std::move(global);
  m.cluster_params = std::move(cluster);
  return m;
}

SgdHyperparams plain_sgd(double lr, std::size_t epochs = 1) {
  SgdHyperparams hp;
  hp.lr_init = lr;
  hp.lr_decay = 1.0;
  hp.momentum = 0.0;
  hp.weight_decay = 0.0;
  hp.clip_norm = 1e12;
  hp.local_epochs = epochs;
  hp.cluster_l2 = 0.0;
  hp.batch_size = 64;
  return hp;
}

}  // namespace

TEST(ForwardAdditive, ZeroClusterNetworkIsIdentity) {
  LearnerConfig cfg{.input_dim = 3, .hidden_dims = {4}, .num_classes = 2};
  RngStream rng = RngStream::root(11).child("init");
  ParamVector global = fedbac::mlp_init(cfg, rng);
  ParamVector zeros(cfg.param_count(), 0.0);
  const AdditiveModel m = make_model(cfg, global, zeros);
  const std::vector<double> x = {0.3, -1.2, 0.7};
  const auto sum = fedbac::forward_additive(m, x);
  const auto alone = fedbac::mlp_logits(cfg, global, x);
  for (std::size_t c = 0; c < sum.size(); ++c) EXPECT_EQ(sum[c], alone[c]);
}

TEST(ForwardAdditive, SwappingNetworksCommutes) {
  LearnerConfig cfg{.input_dim = 3, .hidden_dims = {5}, .num_classes = 4};
  RngStream rng = RngStream::root(12).child("init");
  ParamVector a = fedbac::mlp_init(cfg, rng);
  ParamVector b = fedbac::mlp_init(cfg, rng);
  const std::vector<double> x = {1.0, 2.0, -0.5};
  const auto fwd = fedbac::forward_additive(make_model(cfg, a, b), x);
  const auto rev = fedbac::forward_additive(make_model(cfg, b, a), x);
  for (std::size_t c = 0; c < fwd.size(); ++c) EXPECT_EQ(fwd[c], rev[c]);
}

TEST(ForwardAdditive, MatchesIndependentInterpreter) {
  LearnerConfig cfg{.input_dim = 6, .hidden_dims = {8, 5}, .num_classes = 3};
  RngStream rng = RngStream::root(13).child("init");
  ParamVector g = fedbac::mlp_init(cfg, rng);
  ParamVector c = fedbac::mlp_init(cfg, rng);
  for (std::size_t basis = 0; basis < cfg.input_dim; ++basis) {
    std::vector<double> x(cfg.input_dim, 0.0);
    x[basis] = 1.0;
    const auto got = fedbac::forward_additive(make_model(cfg, g, c), x);
    const auto ng = naive_forward(cfg, g, x);
    const auto nc = naive_forward(cfg, c, x);
    for (std::size_t j = 0; j < got.size(); ++j) {
      EXPECT_NEAR(got[j], ng[j] + nc[j], 1e-12);
    }
  }
}

TEST(ForwardAdditive, IsExactSumOfBothNetworks) {
  LearnerConfig cfg{.input_dim = 4, .hidden_dims = {6}, .num_classes = 5};
  RngStream rng = RngStream::root(14).child("init");
  ParamVector g = fedbac::mlp_init(cfg, rng);
  ParamVector c = fedbac::mlp_init(cfg, rng);
  const std::vector<double> x = {0.1, -0.2, 0.3, 1.5};
  const auto sum = fedbac::forward_additive(make_model(cfg, g, c), x);
  const auto hg = fedbac::mlp_logits(cfg, g, x);
  const auto hc = fedbac::mlp_logits(cfg, c, x);
  for (std::size_t j = 0; j < sum.size(); ++j) EXPECT_EQ(sum[j], hg[j] + hc[j]);
}

TEST(ForwardAdditive, DimensionMismatchIsConfigError) {
  LearnerConfig a{.input_dim = 3, .hidden_dims = {}, .num_classes = 2};
  LearnerConfig b{.input_dim = 3, .hidden_dims = {}, .num_classes = 4};
  AdditiveModel m;
  m.global_config = a;
  m.cluster_config = b;
  m.global_params.assign(a.param_count(), 0.0);
  m.cluster_params.assign(b.param_count(), 0.0);
  EXPECT_THROW(fedbac::forward_additive(m, std::vector<double>{1, 2, 3}), fedbac::ConfigError);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  const std::vector<double> logits(10, 1.7);
  EXPECT_NEAR(fedbac::cross_entropy_loss(logits, 3), std::log(10.0), 1e-12);
}

TEST(CrossEntropy, SaturatedCorrectClassNearZero) {
  const std::vector<double> logits = {30.0, -30.0};
  EXPECT_LT(fedbac::cross_entropy_loss(logits, 0), 1e-12);
}

TEST(CrossEntropy, HandComputedThreeClassCase) {
  const std::vector<double> logits = {1.0, 2.0, 3.0};
  const double expected =
      -std::log(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  EXPECT_NEAR(fedbac::cross_entropy_loss(logits, 1), expected, 1e-12);
  EXPECT_NEAR(fedbac::cross_entropy_loss(logits, 1), 1.407606, 1e-6);
}

TEST(CrossEntropy, LabelOutOfRange) {
  const std::vector<double> logits = {0.0, 0.0};
  EXPECT_THROW(fedbac::cross_entropy_loss(logits, 2), fedbac::InputError);
}

TEST(LocalSgd, ZeroLearningRateIsIdentity) {
  LearnerConfig cfg{.input_dim = 2, .hidden_dims = {3}, .num_classes = 2};
  RngStream rng = RngStream::root(20).child("init");
  AdditiveModel m = make_model(cfg, fedbac::mlp_init(cfg, rng), fedbac::mlp_init(cfg, rng));
  Dataset data;
  data.examples = {{{0.5, -0.5}, 1}, {{1.0, 0.0}, 0}};
  SgdHyperparams hp = plain_sgd(0.0, 3);
  RngStream train = RngStream::root(20).child("train");
  const AdditiveModel out = fedbac::local_sgd(m, data, hp, 0, train);
  EXPECT_EQ(out.global_params, m.global_params);
  EXPECT_EQ(out.cluster_params, m.cluster_params);
}

TEST(LocalSgd, MatchesHandComputedLinearGradient) {
  // Linear 2-class additive pair; one sample, one epoch, no momentum, decay,
  // weight decay or clipping. Expected update: theta - lr * grad(CE + l2*||theta_k||^2).
  LearnerConfig cfg{.input_dim = 2, .hidden_dims = {}, .num_classes = 2};
  ParamVector g = {0.3, -0.2, 0.1, 0.4, 0.05, -0.05};  // W row-major then b
  ParamVector c = {-0.1, 0.2, 0.3, -0.4, 0.0, 0.1};
  const std::vector<double> x = {1.5, -0.5};
  const std::size_t label = 1;
  const double lr = 0.1;
  const double l2 = 0.01;

  auto logit = [&](const ParamVector& p, std::size_t j) {
    return p[j * 2] * x[0] + p[j * 2 + 1] * x[1] + p[4 + j];
  };
  const double z0 = logit(g, 0) + logit(c, 0);
  const double z1 = logit(g, 1) + logit(c, 1);
  const double m0 = std::max(z0, z1);
  const double p0 = std::exp(z0 - m0) / (std::exp(z0 - m0) + std::exp(z1 - m0));
  const double p1 = 1.0 - p0;
  const double d0 = p0 - (label == 0 ? 1.0 : 0.0);
  const double d1 = p1 - (label == 1 ? 1.0 : 0.0);

  ParamVector expected_g = g;
  ParamVector expected_c = c;
  const double delta[2] = {d0, d1};
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t i = 0; i < 2; ++i) {
      expected_g[j * 2 + i] -= lr * delta[j] * x[i];
      expected_c[j * 2 + i] -= lr * (delta[j] * x[i] + 2.0 * l2 * c[j * 2 + i]);
    }
    expected_g[4 + j] -= lr * delta[j];
    expected_c[4 + j] -= lr * (delta[j] + 2.0 * l2 * c[4 + j]);
  }

  AdditiveModel m = make_model(cfg, g, c);
  Dataset data;
  data.examples = {{x, label}};
  SgdHyperparams hp = plain_sgd(lr);
  hp.cluster_l2 = l2;
  RngStream train = RngStream::root(21).child("train");
  const AdditiveModel out = fedbac::local_sgd(m, data, hp, 0, train);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(out.global_params[i], expected_g[i], 1e-12);
    EXPECT_NEAR(out.cluster_params[i], expected_c[i], 1e-12);
  }
  // Input model untouched.
  EXPECT_EQ(m.global_params, g);
}

TEST(LocalSgd, DeterministicGivenEqualStreams) {
  LearnerConfig cfg{.input_dim = 4, .hidden_dims = {6}, .num_classes = 3};
  RngStream rng = RngStream::root(22).child("init");
  AdditiveModel m = make_model(cfg, fedbac::mlp_init(cfg, rng), fedbac::mlp_init(cfg, rng));
  Dataset data;
  RngStream drng = RngStream::root(22).child("data");
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x(4);
    for (double& v : x) v = drng.normal();
    data.examples.push_back({x, drng.uniform_index(3)});
  }
  SgdHyperparams hp;
  hp.batch_size = 8;
  RngStream t1 = RngStream::root(22).child("train");
  RngStream t2 = RngStream::root(22).child("train");
  const AdditiveModel a = fedbac::local_sgd(m, data, hp, 5, t1);
  const AdditiveModel b = fedbac::local_sgd(m, data, hp, 5, t2);
  EXPECT_EQ(a.global_params, b.global_params);
  EXPECT_EQ(a.cluster_params, b.cluster_params);
}

TEST(LocalSgd, LearningRateScheduleIsExactPower) {
  LearnerConfig cfg{.input_dim = 2, .hidden_dims = {}, .num_classes = 2};
  ParamVector g = {0.3, -0.2, 0.1, 0.4, 0.0, 0.0};
  ParamVector c(6, 0.0);
  AdditiveModel m = make_model(cfg, g, c);
  Dataset data;
  data.examples = {{{1.0, 1.0}, 0}};
  SgdHyperparams hp = plain_sgd(0.1);
  hp.lr_decay = 0.995;
  RngStream t0 = RngStream::root(23).child("t");
  RngStream t3 = RngStream::root(23).child("t");
  const AdditiveModel at0 = fedbac::local_sgd(m, data, hp, 0, t0);
  const AdditiveModel at3 = fedbac::local_sgd(m, data, hp, 3, t3);
  const double factor = std::pow(0.995, 3.0);
  for (std::size_t i = 0; i < 6; ++i) {
    const double step0 = at0.global_params[i] - g[i];
    const double step3 = at3.global_params[i] - g[i];
    EXPECT_NEAR(step3, factor * step0, 1e-15 + 1e-12 * std::abs(step0));
  }
}

TEST(LocalSgd, EmptyDatasetIsInputError) {
  LearnerConfig cfg{.input_dim = 2, .hidden_dims = {}, .num_classes = 2};
  AdditiveModel m = make_model(cfg, ParamVector(6, 0.0), ParamVector(6, 0.0));
  Dataset empty;
  SgdHyperparams hp;
  RngStream t = RngStream::root(24).child("t");
  EXPECT_THROW(fedbac::local_sgd(m, empty, hp, 0, t), fedbac::InputError);
}

TEST(LocalSgd, ZeroInputZeroWeightsOnlyMovesOutputBias) {
  // With zero inputs and zero weights every activation is zero, so all weight
  // gradients and hidden-layer gradients vanish; only the output bias moves.
  LearnerConfig cfg{.input_dim = 3, .hidden_dims = {4}, .num_classes = 2};
  AdditiveModel m = make_model(cfg, ParamVector(cfg.param_count(), 0.0),
                               ParamVector(cfg.param_count(), 0.0));
  Dataset data;
  data.examples = {{{0.0, 0.0, 0.0}, 0}, {{0.0, 0.0, 0.0}, 1}};
  SgdHyperparams hp = plain_sgd(0.1);
  RngStream t = RngStream::root(25).child("t");
  const AdditiveModel out = fedbac::local_sgd(m, data, hp, 0, t);
  // Layout: W0 (4x3), b0 (4), W1 (2x4), b1 (2). Everything but b1 stays zero.
  const std::size_t b1_start = 4 * 3 + 4 + 2 * 4;
  for (std::size_t i = 0; i < b1_start; ++i) {
    EXPECT_EQ(out.global_params[i], 0.0) << "index " << i;
  }
  // Both samples' labels disagree, so softmax deltas cancel only partially;
  // with labels 0 and 1 and uniform softmax the mean delta is exactly zero.
  EXPECT_EQ(out.global_params[b1_start], 0.0);
  EXPECT_EQ(out.global_params[b1_start + 1], 0.0);
}

TEST(ClipGlobalNorm, JointNormRespectsBound) {
  std::vector<double> a = {3.0, 0.0};
  std::vector<double> b = {0.0, 4.0};
  std::vector<std::span<double>> parts = {std::span(a), std::span(b)};
  const double pre = fedbac::clip_global_norm(parts, 1.0);
  EXPECT_NEAR(pre, 5.0, 1e-12);
  double sq = a[0] * a[0] + a[1] * a[1] + b[0] * b[0] + b[1] * b[1];
  EXPECT_LE(std::sqrt(sq), 1.0 + 1e-9);
  EXPECT_NEAR(a[0] / b[1], 3.0 / 4.0, 1e-12);  // direction preserved
}

TEST(ClipGlobalNorm, NoOpBelowBound) {
  std::vector<double> a = {0.3, 0.4};
  std::vector<std::span<double>> parts = {std::span(a)};
  fedbac::clip_global_norm(parts, 1.0);
  EXPECT_EQ(a[0], 0.3);
  EXPECT_EQ(a[1], 0.4);
}

TEST(LocalSgd, ClippingBoundsTheStep) {
  // No momentum or decay: a single batch's step is exactly lr * clipped grad.
  LearnerConfig cfg{.input_dim = 2, .hidden_dims = {}, .num_classes = 2};
  ParamVector g = {5.0, -5.0, 5.0, -5.0, 0.0, 0.0};
  AdditiveModel m = make_model(cfg, g, ParamVector(6, 0.0));
  Dataset data;
  data.examples = {{{10.0, -10.0}, 1}};  // large margin the wrong way: big gradient
  SgdHyperparams hp = plain_sgd(1.0);
  hp.clip_norm = 0.5;
  RngStream t = RngStream::root(26).child("t");
  const AdditiveModel out = fedbac::local_sgd(m, data, hp, 0, t);
  double sq = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    const double dg = out.global_params[i] - m.global_params[i];
    const double dc = out.cluster_params[i] - m.cluster_params[i];
    sq += dg * dg + dc * dc;
  }
  EXPECT_LE(std::sqrt(sq), 0.5 + 1e-9);
  EXPECT_GT(std::sqrt(sq), 0.49);  // the clip was actually active
}

TEST(Evaluate, UniformPredictorUsesTieRule) {
  LearnerConfig cfg{.input_dim = 2, .hidden_dims = {}, .num_classes = 10};
  AdditiveModel m = make_model(cfg, ParamVector(cfg.param_count(), 0.0),
                               ParamVector(cfg.param_count(), 0.0));
  Dataset data;
  for (std::size_t label : {0u, 0u, 3u, 7u, 9u}) {
    data.examples.push_back({{1.0, -1.0}, label});
  }
  const auto r = fedbac::evaluate(m, data);
  EXPECT_NEAR(r.accuracy, 2.0 / 5.0, 1e-15);
  EXPECT_NEAR(r.mean_loss, std::log(10.0), 1e-12);
}

TEST(Evaluate, SingleCorrectSample) {
  LearnerConfig cfg{.input_dim = 2, .hidden_dims = {}, .num_classes = 2};
  ParamVector g = {2.0, 0.0, -2.0, 0.0, 0.0, 0.0};  // class 0 wins for x0 > 0
  AdditiveModel m = make_model(cfg, g, ParamVector(6, 0.0));
  Dataset data;
  data.examples = {{{1.0, 0.0}, 0}};
  EXPECT_EQ(fedbac::evaluate(m, data).accuracy, 1.0);
}

TEST(Evaluate, FourSampleFixtureMatchesHandEvaluation) {
  LearnerConfig cfg{.input_dim = 2, .hidden_dims = {}, .num_classes = 2};
  ParamVector g = {1.0, -1.0, -1.0, 1.0, 0.1, -0.1};
  AdditiveModel m = make_model(cfg, g, ParamVector(6, 0.0));
  Dataset data;
  data.examples = {{{1.0, 0.0}, 0}, {{0.0, 1.0}, 1}, {{-1.0, 0.0}, 0}, {{0.5, 0.5}, 1}};
  std::size_t correct = 0;
  double loss = 0.0;
  for (const auto& ex : data.examples) {
    const double z0 = g[0] * ex.features[0] + g[1] * ex.features[1] + g[4];
    const double z1 = g[2] * ex.features[0] + g[3] * ex.features[1] + g[5];
    const std::size_t pred = z1 > z0 ? 1 : 0;
    if (pred == ex.label) ++correct;
    const double zy = ex.label == 0 ? z0 : z1;
    loss += std::log(std::exp(z0) + std::exp(z1)) - zy;
  }
  const auto r = fedbac::evaluate(m, data);
  EXPECT_NEAR(r.accuracy, correct / 4.0, 1e-15);
  EXPECT_NEAR(r.mean_loss, loss / 4.0, 1e-12);
}

TEST(Evaluate, EmptyDatasetIsInputError) {
  LearnerConfig cfg{.input_dim = 2, .hidden_dims = {}, .num_classes = 2};
  AdditiveModel m = make_model(cfg, ParamVector(6, 0.0), ParamVector(6, 0.0));
  EXPECT_THROW(fedbac::evaluate(m, Dataset{}), fedbac::InputError);
}

TEST(GradientCheck, LinearModelSingleSample) {
  LearnerConfig cfg{.input_dim = 3, .hidden_dims = {}, .num_classes = 2};
  RngStream rng = RngStream::root(30).child("gc");
  EXPECT_LT(fedbac::gradient_check(cfg, rng, 1), 1e-6);
}

TEST(GradientCheck, TwoLayerMlpBatch) {
  LearnerConfig cfg{.input_dim = 5, .hidden_dims = {7, 6}, .num_classes = 4};
  RngStream rng = RngStream::root(31).child("gc");
  EXPECT_LT(fedbac::gradient_check(cfg, rng, 8), 1e-4);
}

TEST(MlpInit, DeterministicAndCorrectLength) {
  LearnerConfig cfg{.input_dim = 4, .hidden_dims = {5}, .num_classes = 3};
  RngStream a = RngStream::root(40).child("i");
  RngStream b = RngStream::root(40).child("i");
  const ParamVector pa = fedbac::mlp_init(cfg, a);
  const ParamVector pb = fedbac::mlp_init(cfg, b);
  EXPECT_EQ(pa.size(), cfg.param_count());
  EXPECT_EQ(pa, pb);
  EXPECT_EQ(cfg.param_count(), std::size_t(4 * 5 + 5 + 5 * 3 + 3));
}
