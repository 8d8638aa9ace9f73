#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "lossland/data_io.hpp"
#include "lossland/network.hpp"

namespace lossland {

struct TrainConfig {
  enum class Optimizer { sgd, adam };
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 0;  // 0 disables early stopping
  std::uint64_t seed = 0;

  void validate(std::size_t train_size) const;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_acc;
  std::size_t best_epoch = 0;
  double wall_seconds = 0.0;
};

// theta <- theta - lr*g on trainable tensors. Entries under a zero mask
// stay exactly 0. Throws on non-finite gradients, naming the layer.
void sgd_step(ParamSet& theta, const Gradients& grads, const Mask* mask,
              double lr, const std::vector<LayerSpec>& layers);

struct AdamState {
  ParamSet m, v;
  std::size_t step = 0;
};

AdamState make_adam_state(const Network& net);

// Adam with bias correction. Moment entries under a zero mask stay 0.
void adam_step(ParamSet& theta, const Gradients& grads, const Mask* mask,
               AdamState& state, const TrainConfig& cfg,
               const std::vector<LayerSpec>& layers);

// Zeroes the moment entries of pruned weights so they cannot re-grow.
void zero_masked_moments(AdamState& state, const Mask& mask);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean loss and top-1 accuracy in eval mode (fixed chunking, deterministic).
EvalResult evaluate(const Network& net, const Mask* mask, const Dataset& ds);

struct TrainResult {
  Network net;  // snapshot at the best epoch
  TrainReport report;
};

// Mini-batch training with seeded per-epoch reshuffling. Stops at
// max_epochs, or earlier when early_stop_patience > 0 and that many epochs
// pass without a validation-loss improvement. Progress lines
// "epoch E train_loss X val_loss Y val_acc Z" go to *progress when given.
TrainResult train(const Network& net, const Mask* mask,
                  const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, std::ostream* progress = nullptr);

// Seeded 10% holdout for datasets without a designated validation split.
std::pair<Dataset, Dataset> holdout_split(const Dataset& ds, double val_frac,
                                          std::uint64_t seed);

}  // namespace lossland
