#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "lossland/network.hpp"
#include "lossland/optim.hpp"

namespace lossland {

// All-ones mask over the maskable weight tensors of net.
Mask full_mask(const Network& net);

// P_m: surviving fraction of maskable weights, ones / total.
double sparsity(const Mask& mask);

std::size_t mask_ones(const Mask& mask);
std::size_t mask_total(const Mask& mask);

// Per layer, zeroes the floor(p * remaining) smallest-magnitude weights
// among those still unmasked. Ties break by ascending flat index. Layers
// with nothing remaining are untouched.
Mask prune_step(const ParamSet& theta, const Mask& mask, double p);

// theta <- theta_init (.) m for weights; biases, batch-norm parameters and
// running statistics reset to their initial values. Any optimizer state
// held by the caller is stale after this and must be discarded.
Network rewind(const Network& net, const Mask& mask);

// Random mask with exactly the same per-layer surviving counts as the
// reference, chosen uniformly from a seeded stream.
Mask random_mask(const Mask& reference, std::uint64_t seed);

struct Ticket {
  Mask mask;
  Network rewound;   // theta == theta_init (.) m
  Network trained;   // best-epoch snapshot of training this ticket
  std::size_t round = 0;
  double p_m = 1.0;
  double accuracy = 0.0;  // test accuracy of the trained ticket
};

// Training seed used for round r of an IMP run; exposed so baselines can be
// trained under identical conditions.
std::uint64_t imp_round_seed(std::uint64_t base_seed, std::size_t round);

// Iterative magnitude pruning: train, prune the smallest fraction p per
// layer, rewind survivors to their initial values, repeat. Returns
// rounds+1 tickets; ticket 0 is the dense baseline, ticket r carries the
// mask produced after r prune steps. Each ticket's accuracy comes from
// training that ticket itself.
std::vector<Ticket> run_imp(const Network& base, const Dataset& train_set,
                            const Dataset& val_set, const Dataset& test_set,
                            const TrainConfig& cfg, double p,
                            std::size_t rounds, std::size_t epochs_per_round,
                            std::ostream* progress = nullptr);

}  // namespace lossland
