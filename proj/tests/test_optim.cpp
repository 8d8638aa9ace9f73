#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "lossland/data_io.hpp"
#include "lossland/network.hpp"
#include "lossland/optim.hpp"

using namespace lossland;

namespace {

// One-parameter network so the optimizers can be checked against scalar
// references.
Network scalar_net() {
  Network net = build_network({LayerSpec::Dense(1, 1)}, {1}, 1);
  net.theta[0].weight.data[0] = 1.0;
  net.theta[0].bias.data[0] = 0.0;
  return net;
}

Gradients scalar_grad(const Network& net, double g) {
  Gradients grads = zero_gradients(net);
  grads[0].weight.data[0] = g;
  return grads;
}

// Hand-coded scalar Adam, the independent reference.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double theta, double g, double lr, double b1, double b2,
              double eps) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mhat = m / (1 - std::pow(b1, t));
    double vhat = v / (1 - std::pow(b2, t));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

TrainConfig adam_defaults() {
  TrainConfig cfg;
  cfg.optimizer = TrainConfig::Optimizer::adam;
  cfg.learning_rate = 1e-3;
  return cfg;
}

}  // namespace

TEST_CASE("sgd step: definition, fixed point, mask preservation") {
  Network net = scalar_net();
  sgd_step(net.theta, scalar_grad(net, 0.5), nullptr, 0.1, net.layers);
  CHECK(net.theta[0].weight.data[0] == doctest::Approx(0.95).epsilon(1e-15));

  Network fixed = scalar_net();
  sgd_step(fixed.theta, scalar_grad(fixed, 0.0), nullptr, 0.1, fixed.layers);
  CHECK(fixed.theta[0].weight.data[0] == 1.0);

  Network masked = scalar_net();
  masked.theta[0].weight.data[0] = 0.0;
  Mask m;
  m.weights.resize(1);
  m.weights[0] = Tensor({1, 1}, 0.0);
  sgd_step(masked.theta, scalar_grad(masked, 123.0), &m, 0.1, masked.layers);
  CHECK(masked.theta[0].weight.data[0] == 0.0);
}

TEST_CASE("sgd rejects non-finite gradients naming the layer") {
  Network net = scalar_net();
  Gradients g = scalar_grad(net, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_WITH_AS(sgd_step(net.theta, g, nullptr, 0.1, net.layers),
                       doctest::Contains("layer 0"), std::runtime_error);
}

TEST_CASE("adam first step has magnitude ~lr and sign of gradient") {
  Network net = scalar_net();
  AdamState st = make_adam_state(net);
  TrainConfig cfg = adam_defaults();
  adam_step(net.theta, scalar_grad(net, 3.0), nullptr, st, cfg, net.layers);
  // Closed form at t=1: delta = lr * g / (|g| + eps).
  double expect = 1.0 - 1e-3 * 3.0 / (3.0 + 1e-8);
  CHECK(net.theta[0].weight.data[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(std::abs(1.0 - net.theta[0].weight.data[0]) ==
        doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("adam zero gradient with zero state is a no-op") {
  Network net = scalar_net();
  AdamState st = make_adam_state(net);
  TrainConfig cfg = adam_defaults();
  adam_step(net.theta, scalar_grad(net, 0.0), nullptr, st, cfg, net.layers);
  CHECK(net.theta[0].weight.data[0] == 1.0);
}

TEST_CASE("adam matches the scalar reference over 5 quadratic steps") {
  Network net = scalar_net();
  AdamState st = make_adam_state(net);
  TrainConfig cfg = adam_defaults();
  cfg.learning_rate = 0.1;

  ScalarAdam ref;
  double theta_ref = 1.0;
  for (int step = 0; step < 5; ++step) {
    double g = net.theta[0].weight.data[0];  // d/dw of 0.5 w^2
    adam_step(net.theta, scalar_grad(net, g), nullptr, st, cfg, net.layers);
    theta_ref = ref.step(theta_ref, theta_ref, 0.1, cfg.adam_beta1,
                         cfg.adam_beta2, cfg.adam_eps);
    CHECK(std::abs(net.theta[0].weight.data[0] - theta_ref) < 1e-12);
  }
}

TEST_CASE("adam keeps masked weights and their moments at zero") {
  Network net = build_network({LayerSpec::Dense(2, 2)}, {2}, 3);
  Mask m;
  m.weights.resize(1);
  m.weights[0] = Tensor::from({2, 2}, {1.0, 0.0, 1.0, 1.0});
  net.theta[0].weight.data[1] = 0.0;

  AdamState st = make_adam_state(net);
  TrainConfig cfg = adam_defaults();
  Gradients g = zero_gradients(net);
  for (double& v : g[0].weight.data) v = 2.0;
  for (int step = 0; step < 3; ++step)
    adam_step(net.theta, g, &m, st, cfg, net.layers);

  CHECK(net.theta[0].weight.data[1] == 0.0);
  CHECK(st.m[0].weight.data[1] == 0.0);
  CHECK(st.v[0].weight.data[1] == 0.0);
  CHECK(net.theta[0].weight.data[0] != 1.0);  // unmasked entries moved
}

TEST_CASE("train reaches high accuracy on separable blobs") {
  auto [train_ds, test_ds] = synth_blobs(2, 100, 2, 10.0, 5);
  Network net = build_network(
      {LayerSpec::Dense(2, 16), LayerSpec::Relu(), LayerSpec::Dense(16, 2)},
      {2}, 9);
  TrainConfig cfg = adam_defaults();
  cfg.learning_rate = 0.01;
  cfg.batch_size = 16;
  cfg.max_epochs = 50;
  cfg.seed = 4;

  TrainResult result = train(net, nullptr, train_ds, test_ds, cfg);
  CHECK(result.report.val_acc[result.report.best_epoch] >= 0.95);
}

TEST_CASE("patience zero disables early stopping") {
  auto [train_ds, test_ds] = synth_blobs(2, 40, 2, 8.0, 6);
  Network net = build_network({LayerSpec::Dense(2, 4), LayerSpec::Relu(),
                               LayerSpec::Dense(4, 2)},
                              {2}, 10);
  TrainConfig cfg = adam_defaults();
  cfg.batch_size = 8;
  cfg.max_epochs = 12;
  cfg.early_stop_patience = 0;
  TrainResult result = train(net, nullptr, train_ds, test_ds, cfg);
  CHECK(result.report.val_loss.size() == 12);

  cfg.early_stop_patience = 2;
  TrainResult stopped = train(net, nullptr, train_ds, test_ds, cfg);
  CHECK(stopped.report.val_loss.size() <= 12);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  auto [train_ds, test_ds] = synth_blobs(3, 30, 3, 6.0, 7);
  Network net = build_network({LayerSpec::Dense(3, 8), LayerSpec::Relu(),
                               LayerSpec::Dropout(0.2),
                               LayerSpec::Dense(8, 3)},
                              {3}, 11);
  TrainConfig cfg = adam_defaults();
  cfg.batch_size = 8;
  cfg.max_epochs = 6;
  cfg.seed = 12;

  TrainResult a = train(net, nullptr, train_ds, test_ds, cfg);
  TrainResult b = train(net, nullptr, train_ds, test_ds, cfg);
  CHECK(a.report.train_loss == b.report.train_loss);
  CHECK(a.report.val_loss == b.report.val_loss);
  CHECK(a.report.val_acc == b.report.val_acc);
  CHECK(a.report.best_epoch == b.report.best_epoch);
  for (std::size_t i = 0; i < a.net.theta.size(); ++i)
    CHECK(a.net.theta[i].weight.data == b.net.theta[i].weight.data);

  TrainConfig other = cfg;
  other.seed = 13;
  TrainResult c = train(net, nullptr, train_ds, test_ds, other);
  CHECK(a.report.train_loss != c.report.train_loss);
}

TEST_CASE("early stopping returns the epoch with minimum validation loss") {
  auto [train_ds, test_ds] = synth_blobs(2, 60, 2, 4.0, 8);
  Network net = build_network({LayerSpec::Dense(2, 8), LayerSpec::Relu(),
                               LayerSpec::Dense(8, 2)},
                              {2}, 14);
  TrainConfig cfg = adam_defaults();
  cfg.learning_rate = 0.05;
  cfg.batch_size = 8;
  cfg.max_epochs = 20;
  cfg.seed = 15;

  TrainResult result = train(net, nullptr, train_ds, test_ds, cfg);
  double min_val = *std::min_element(result.report.val_loss.begin(),
                                     result.report.val_loss.end());
  CHECK(result.report.val_loss[result.report.best_epoch] == min_val);
  EvalResult check = evaluate(result.net, nullptr, test_ds);
  CHECK(check.loss == doctest::Approx(min_val).epsilon(1e-12));
}

TEST_CASE("mask preserved across whole trainings") {
  auto [train_ds, test_ds] = synth_blobs(2, 50, 3, 8.0, 9);
  Network net = build_network({LayerSpec::Dense(3, 10), LayerSpec::Relu(),
                               LayerSpec::Dense(10, 2)},
                              {3}, 16);
  Mask m;
  m.weights.resize(3);
  m.weights[0] = Tensor({10, 3}, 1.0);
  m.weights[2] = Tensor({2, 10}, 1.0);
  for (std::size_t k = 0; k < 30; k += 3) m.weights[0].data[k] = 0.0;
  for (std::size_t k = 0; k < 20; k += 4) m.weights[2].data[k] = 0.0;

  for (std::size_t epochs : {1, 3, 7}) {
    TrainConfig cfg = adam_defaults();
    cfg.batch_size = 10;
    cfg.max_epochs = epochs;
    cfg.seed = 17;
    TrainResult result = train(net, &m, train_ds, test_ds, cfg);
    for (std::size_t i : {std::size_t{0}, std::size_t{2}})
      for (std::size_t k = 0; k < m.weights[i].data.size(); ++k)
        if (m.weights[i].data[k] == 0.0)
          CHECK(result.net.theta[i].weight.data[k] == 0.0);
  }
}

TEST_CASE("config validation: batch size against training set size") {
  TrainConfig cfg = adam_defaults();
  cfg.batch_size = 9600;
  CHECK_NOTHROW(cfg.validate(10000));  // last batch may be short
  CHECK_THROWS_AS(cfg.validate(9599), std::invalid_argument);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(100), std::invalid_argument);

  TrainConfig bad = adam_defaults();
  bad.adam_beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(100), std::invalid_argument);
}

TEST_CASE("empty dataset is rejected") {
  Network net = scalar_net();
  Dataset empty;
  empty.images = Tensor({0, 1});
  empty.num_classes = 2;
  TrainConfig cfg = adam_defaults();
  CHECK_THROWS_AS(train(net, nullptr, empty, empty, cfg),
                  std::invalid_argument);
}

TEST_CASE("holdout split is seeded and exhaustive") {
  auto [train_ds, test_ds] = synth_blobs(2, 50, 2, 8.0, 10);
  auto [a_train, a_val] = holdout_split(train_ds, 0.1, 3);
  auto [b_train, b_val] = holdout_split(train_ds, 0.1, 3);
  CHECK(a_train.size() + a_val.size() == train_ds.size());
  CHECK(a_val.size() == train_ds.size() / 10);
  CHECK(a_train.images.data == b_train.images.data);
  CHECK(a_val.labels == b_val.labels);

  auto [c_train, c_val] = holdout_split(train_ds, 0.1, 4);
  CHECK(a_val.images.data != c_val.images.data);
}
