#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lossland/tensor.hpp"

namespace lossland {

enum class LayerKind {
  dense,
  conv2d,
  relu,
  batch_norm,
  dropout,
  flatten,
  avg_pool,
  residual_add,
};

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in_features = 0, out_features = 0;   // dense
  std::size_t in_channels = 0, out_channels = 0;   // conv2d
  std::size_t kernel = 0, stride = 1, padding = 0; // conv2d
  std::size_t pool = 2;                            // avg_pool (kernel == stride)
  double rate = 0.5;                               // dropout
  std::size_t skip_from = 0;                       // residual_add source layer

  static LayerSpec Dense(std::size_t in, std::size_t out);
  static LayerSpec Conv2d(std::size_t in_ch, std::size_t out_ch,
                          std::size_t kernel, std::size_t stride = 1,
                          std::size_t padding = 0);
  static LayerSpec Relu();
  static LayerSpec BatchNorm();
  static LayerSpec Dropout(double rate);
  static LayerSpec Flatten();
  static LayerSpec AvgPool(std::size_t k);
  static LayerSpec ResidualAdd(std::size_t skip_from);
};

// True for layers whose weight tensor participates in masking and in the
// filter decomposition (dense and conv2d).
inline bool has_weights(LayerKind k) {
  return k == LayerKind::dense || k == LayerKind::conv2d;
}

// Parameters of one layer. Unused tensors stay empty. For batch_norm,
// run_mean/run_var are state buffers, not trainable parameters.
struct LayerParams {
  Tensor weight;
  Tensor bias;
  Tensor gamma, beta;
  Tensor run_mean, run_var;
};

using ParamSet = std::vector<LayerParams>;

// Binary overlay on maskable weight tensors. weights[i] is congruent with
// layer i's weight tensor, or empty for layers without weights. Biases and
// batch-norm parameters are never masked.
struct Mask {
  std::vector<Tensor> weights;
};

enum class Mode { train, eval };

struct Network {
  std::vector<LayerSpec> layers;
  std::vector<std::size_t> input_shape;              // without batch dim
  std::vector<std::vector<std::size_t>> out_shapes;  // per layer, without batch dim
  ParamSet theta;
  ParamSet theta_init;
  std::uint64_t seed = 0;

  std::size_t num_classes() const {
    return out_shapes.empty() ? 0 : out_shapes.back().back();
  }
  std::size_t param_count() const;
};

// Builds a network with seeded Kaiming-style Gaussian weights
// (std = sqrt(2/fan_in)), zero biases, unit batch-norm scale.
// theta_init == theta at return. Same (spec, input_shape, seed) gives
// bit-identical parameters.
Network build_network(const std::vector<LayerSpec>& spec,
                      const std::vector<std::size_t>& input_shape,
                      std::uint64_t seed);

// Per-layer activation cache produced by forward().
struct ForwardTrace {
  Tensor input;
  std::vector<Tensor> outputs;       // per layer
  std::vector<Tensor> dropout_keep;  // per layer; scaled keep mask, empty if n/a
  struct BnCache {
    Tensor mean, var;  // batch statistics (biased variance)
  };
  std::vector<BnCache> bn;           // per layer; empty tensors if n/a
};

// Runs the network. In eval mode, dropout is identity and batch_norm uses
// the stored running statistics; the call never mutates the network.
// Running-stat updates are explicit via absorb_batch_stats().
Tensor forward(const Network& net, const Mask* mask, const Tensor& inputs,
               Mode mode, std::uint64_t dropout_seed,
               ForwardTrace* trace = nullptr);

// Folds the batch statistics captured in a train-mode trace into the
// running estimates: run <- (1-momentum)*run + momentum*batch.
void absorb_batch_stats(Network& net, const ForwardTrace& trace,
                        double momentum = 0.1);

// Mean negative log softmax probability of the true class.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

using Gradients = ParamSet;  // shape-congruent with theta; stat buffers zero

struct BackwardResult {
  double loss = 0.0;
  Gradients grads;
};

// Loss plus exact gradients of mean cross-entropy w.r.t. theta for the
// realized dropout pattern. Gradient entries under a zero mask are zero.
// If trace_out is given, the internal forward trace is exposed so callers
// can absorb batch statistics.
BackwardResult backward(const Network& net, const Mask* mask,
                        const Tensor& inputs, const std::vector<int>& labels,
                        Mode mode, std::uint64_t dropout_seed,
                        ForwardTrace* trace_out = nullptr);

Gradients zero_gradients(const Network& net);

// Filter decomposition: the weight slice feeding one output unit. Dense
// (F,I) -> F rows of length I; conv (F,C,K,K) -> F blocks of C*K*K.
// Layers without weights yield nothing. Visits (i, j) in lexicographic
// order, each filter exactly once.
std::size_t filter_count(const LayerSpec& spec);
std::size_t filter_length(const LayerSpec& spec);

template <typename Fn>
void for_each_filter(const std::vector<LayerSpec>& layers, ParamSet& params,
                     Fn&& fn) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!has_weights(layers[i].kind)) continue;
    std::size_t f = filter_count(layers[i]);
    std::size_t len = filter_length(layers[i]);
    for (std::size_t j = 0; j < f; ++j)
      fn(i, j, std::span<double>(params[i].weight.data.data() + j * len, len));
  }
}

template <typename Fn>
void for_each_filter(const std::vector<LayerSpec>& layers,
                     const ParamSet& params, Fn&& fn) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!has_weights(layers[i].kind)) continue;
    std::size_t f = filter_count(layers[i]);
    std::size_t len = filter_length(layers[i]);
    for (std::size_t j = 0; j < f; ++j)
      fn(i, j,
         std::span<const double>(params[i].weight.data.data() + j * len, len));
  }
}

// Applies fn to every tensor of every layer (weight, bias, gamma, beta,
// run_mean, run_var), skipping empty ones.
template <typename Fn>
void for_each_tensor(ParamSet& params, Fn&& fn) {
  for (auto& lp : params) {
    for (Tensor* t : {&lp.weight, &lp.bias, &lp.gamma, &lp.beta, &lp.run_mean,
                      &lp.run_var})
      if (!t->empty()) fn(*t);
  }
}

// Trainable tensors only (weight, bias, gamma, beta); running stats are
// buffers and carry no gradient.
template <typename Fn>
void for_each_trainable(ParamSet& params, Fn&& fn) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& lp = params[i];
    for (Tensor* t : {&lp.weight, &lp.bias, &lp.gamma, &lp.beta})
      if (!t->empty()) fn(i, *t);
  }
}

template <typename Fn>
void for_each_trainable_pair(ParamSet& a, const ParamSet& b, Fn&& fn) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    Tensor* ta[] = {&a[i].weight, &a[i].bias, &a[i].gamma, &a[i].beta};
    const Tensor* tb[] = {&b[i].weight, &b[i].bias, &b[i].gamma, &b[i].beta};
    for (int k = 0; k < 4; ++k)
      if (!ta[k]->empty()) fn(i, *ta[k], *tb[k]);
  }
}

void check_mask_congruent(const Network& net, const Mask& mask);

}  // namespace lossland
