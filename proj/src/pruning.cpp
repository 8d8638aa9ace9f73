#include "lossland/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "lossland/rng.hpp"

namespace lossland {

Mask full_mask(const Network& net) {
  Mask m;
  m.weights.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (has_weights(net.layers[i].kind))
      m.weights[i] = Tensor(net.theta[i].weight.shape, 1.0);
  return m;
}

std::size_t mask_ones(const Mask& mask) {
  std::size_t n = 0;
  for (const Tensor& t : mask.weights)
    for (double v : t.data) n += (v != 0.0);
  return n;
}

std::size_t mask_total(const Mask& mask) {
  std::size_t n = 0;
  for (const Tensor& t : mask.weights) n += t.numel();
  return n;
}

double sparsity(const Mask& mask) {
  std::size_t total = mask_total(mask);
  if (total == 0) throw std::invalid_argument("sparsity: empty mask");
  return static_cast<double>(mask_ones(mask)) / static_cast<double>(total);
}

Mask prune_step(const ParamSet& theta, const Mask& mask, double p) {
  if (p <= 0.0 || p >= 1.0)
    throw std::invalid_argument("prune_step: p must be in (0,1)");
  if (theta.size() != mask.weights.size())
    throw std::invalid_argument("prune_step: layer count mismatch");

  Mask out = mask;
  for (std::size_t i = 0; i < mask.weights.size(); ++i) {
    const Tensor& m = mask.weights[i];
    if (m.empty()) continue;
    const Tensor& w = theta[i].weight;
    if (!w.same_shape(m))
      throw std::invalid_argument("prune_step: mask/theta shape mismatch at layer " +
                                  std::to_string(i));

    std::vector<std::size_t> remaining;
    for (std::size_t k = 0; k < m.data.size(); ++k)
      if (m.data[k] != 0.0) remaining.push_back(k);
    std::size_t cut = static_cast<std::size_t>(
        std::floor(p * static_cast<double>(remaining.size())));
    if (cut == 0) continue;

    // Smallest |w| first; ties by ascending flat index (remaining is
    // already index-sorted, stable sort preserves that order).
    std::stable_sort(remaining.begin(), remaining.end(),
                     [&](std::size_t a, std::size_t b) {
                       return std::abs(w.data[a]) < std::abs(w.data[b]);
                     });
    for (std::size_t k = 0; k < cut; ++k)
      out.weights[i].data[remaining[k]] = 0.0;
  }
  return out;
}

Network rewind(const Network& net, const Mask& mask) {
  check_mask_congruent(net, mask);
  Network out = net;
  out.theta = net.theta_init;
  for (std::size_t i = 0; i < out.theta.size(); ++i) {
    const Tensor& m = mask.weights[i];
    if (m.empty()) continue;
    Tensor& w = out.theta[i].weight;
    for (std::size_t k = 0; k < w.data.size(); ++k) w.data[k] *= m.data[k];
  }
  return out;
}

Mask random_mask(const Mask& reference, std::uint64_t seed) {
  Mask out;
  out.weights.resize(reference.weights.size());
  for (std::size_t i = 0; i < reference.weights.size(); ++i) {
    const Tensor& ref = reference.weights[i];
    if (ref.empty()) continue;
    std::size_t ones = 0;
    for (double v : ref.data) ones += (v != 0.0);
    Tensor m(ref.shape, 0.0);
    std::vector<std::size_t> idx(ref.numel());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(seed, i));
    rng.shuffle(idx);
    for (std::size_t k = 0; k < ones; ++k) m.data[idx[k]] = 1.0;
    out.weights[i] = std::move(m);
  }
  return out;
}

std::uint64_t imp_round_seed(std::uint64_t base_seed, std::size_t round) {
  return mix_seed(base_seed, 0x1109, round);
}

std::vector<Ticket> run_imp(const Network& base, const Dataset& train_set,
                            const Dataset& val_set, const Dataset& test_set,
                            const TrainConfig& cfg, double p,
                            std::size_t rounds, std::size_t epochs_per_round,
                            std::ostream* progress) {
  if (rounds < 1) throw std::invalid_argument("run_imp: rounds >= 1");

  TrainConfig round_cfg = cfg;
  round_cfg.max_epochs = epochs_per_round;

  std::vector<Ticket> tickets;
  Mask mask = full_mask(base);
  Network current = base;  // theta == theta_init at round 0

  for (std::size_t r = 0; r <= rounds; ++r) {
    round_cfg.seed = imp_round_seed(cfg.seed, r);
    TrainResult tr =
        train(current, &mask, train_set, val_set, round_cfg, nullptr);
    EvalResult test = evaluate(tr.net, &mask, test_set);

    Ticket t;
    t.mask = mask;
    t.rewound = current;
    t.trained = tr.net;
    t.round = r;
    t.p_m = sparsity(mask);
    t.accuracy = test.accuracy;
    tickets.push_back(std::move(t));

    if (progress != nullptr)
      (*progress) << "imp round " << r << " P_m " << tickets.back().p_m
                  << " test_acc " << test.accuracy << "\n";

    if (r < rounds) {
      mask = prune_step(tr.net.theta, mask, p);
      current = rewind(tr.net, mask);
    }
  }
  return tickets;
}

}  // namespace lossland
