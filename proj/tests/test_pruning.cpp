#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lossland/data_io.hpp"
#include "lossland/pruning.hpp"
#include "lossland/rng.hpp"

using namespace lossland;

namespace {

Network mlp(std::vector<std::size_t> widths, std::uint64_t seed) {
  std::vector<LayerSpec> spec;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    spec.push_back(LayerSpec::Dense(widths[i], widths[i + 1]));
    if (i + 2 < widths.size()) spec.push_back(LayerSpec::Relu());
  }
  return build_network(spec, {widths.front()}, seed);
}

// Brute-force reference for the per-layer floor pruning rule.
std::vector<std::size_t> floor_rule_counts(std::vector<std::size_t> sizes,
                                           double p, std::size_t rounds) {
  for (std::size_t r = 0; r < rounds; ++r)
    for (auto& n : sizes)
      n -= static_cast<std::size_t>(std::floor(p * static_cast<double>(n)));
  return sizes;
}

std::size_t layer_ones(const Mask& m, std::size_t i) {
  std::size_t n = 0;
  for (double v : m.weights[i].data) n += (v != 0.0);
  return n;
}

}  // namespace

TEST_CASE("sparsity definition") {
  Network net = mlp({4, 5, 4}, 1);  // 20 + 20 weights
  Mask ones = full_mask(net);
  CHECK(sparsity(ones) == 1.0);

  Mask zeros = ones;
  for (Tensor& t : zeros.weights) t.fill(0.0);
  CHECK(sparsity(zeros) == 0.0);

  // 75% of weights pruned leaves P_m = 0.25.
  Mask quarter = ones;
  std::size_t total = mask_total(quarter);
  REQUIRE(total % 4 == 0);
  std::size_t zeroed = 0;
  for (Tensor& t : quarter.weights)
    for (double& v : t.data)
      if (zeroed < total * 3 / 4) {
        v = 0.0;
        ++zeroed;
      }
  CHECK(sparsity(quarter) == 0.25);
}

TEST_CASE("prune_step removes floor(p * remaining) per layer") {
  Network net = mlp({10, 10, 2}, 2);  // layer 0 has exactly 100 weights
  Mask m = full_mask(net);

  Mask m1 = prune_step(net.theta, m, 0.1);
  CHECK(layer_ones(m1, 0) == 90);

  Mask m2 = prune_step(net.theta, m1, 0.1);
  CHECK(layer_ones(m2, 0) == 81);  // floor(0.1 * 90) = 9 more

  Mask m3 = prune_step(net.theta, m2, 0.1);
  CHECK(layer_ones(m3, 0) == 73);  // floor(0.1 * 81) = 8 more

  CHECK_THROWS_AS(prune_step(net.theta, m, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(prune_step(net.theta, m, 1.0), std::invalid_argument);
}

TEST_CASE("prune_step magnitude ties break by ascending flat index") {
  Network net = build_network({LayerSpec::Dense(3, 1)}, {3}, 1);
  net.theta[0].weight = Tensor::from({1, 3}, {0.5, -0.5, 2.0});
  Mask m = full_mask(net);
  Mask out = prune_step(net.theta, m, 0.34);  // floor(0.34*3) = 1 pruned
  CHECK(out.weights[0].data[0] == 0.0);       // |0.5| tie, lower index goes
  CHECK(out.weights[0].data[1] == 1.0);
  CHECK(out.weights[0].data[2] == 1.0);
}

TEST_CASE("prune_step keeps the largest magnitudes") {
  Network net = mlp({30, 20, 4}, 3);
  Mask m = full_mask(net);
  for (int round = 0; round < 4; ++round) {
    Mask next = prune_step(net.theta, m, 0.25);
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
      if (m.weights[i].empty()) continue;
      const Tensor& w = net.theta[i].weight;
      // Brute force: worst surviving pair must dominate best pruned pair
      // in (|w|, index) order.
      std::pair<double, std::size_t> max_pruned{-1.0, 0};
      std::pair<double, std::size_t> min_survivor{
          std::numeric_limits<double>::infinity(), 0};
      for (std::size_t k = 0; k < w.data.size(); ++k) {
        bool newly_pruned =
            m.weights[i].data[k] == 1.0 && next.weights[i].data[k] == 0.0;
        bool survivor = next.weights[i].data[k] == 1.0;
        std::pair<double, std::size_t> key{std::abs(w.data[k]), k};
        if (newly_pruned) max_pruned = std::max(max_pruned, key);
        if (survivor) min_survivor = std::min(min_survivor, key);
      }
      if (max_pruned.first >= 0.0 &&
          min_survivor.first < std::numeric_limits<double>::infinity())
        CHECK(max_pruned < min_survivor);
    }
    m = next;
  }
}

TEST_CASE("rewind restores initial values under the mask") {
  Network net = mlp({6, 8, 3}, 4);
  // Fake a training step.
  for (auto& lp : net.theta)
    for (double& v : lp.weight.data) v += 0.5;

  Mask ones = full_mask(net);
  Network back = rewind(net, ones);
  for (std::size_t i = 0; i < net.theta.size(); ++i)
    CHECK(back.theta[i].weight.data == net.theta_init[i].weight.data);

  Mask m = prune_step(net.theta, ones, 0.3);
  Network ticket = rewind(net, m);
  for (std::size_t i = 0; i < net.theta.size(); ++i) {
    if (m.weights[i].empty()) continue;
    for (std::size_t k = 0; k < m.weights[i].data.size(); ++k) {
      if (m.weights[i].data[k] == 1.0)
        CHECK(ticket.theta[i].weight.data[k] ==
              net.theta_init[i].weight.data[k]);
      else
        CHECK(ticket.theta[i].weight.data[k] == 0.0);
    }
  }

  // Idempotent.
  Network twice = rewind(ticket, m);
  for (std::size_t i = 0; i < ticket.theta.size(); ++i)
    CHECK(twice.theta[i].weight.data == ticket.theta[i].weight.data);

  Mask bad;
  bad.weights.resize(1);
  CHECK_THROWS_AS(rewind(net, bad), std::invalid_argument);
}

TEST_CASE("rewind resets batch-norm running statistics") {
  Network net = build_network({LayerSpec::Dense(3, 4), LayerSpec::BatchNorm(),
                               LayerSpec::Dense(4, 2)},
                              {3}, 5);
  net.theta[1].run_mean.fill(0.7);
  net.theta[1].run_var.fill(4.2);
  Network back = rewind(net, full_mask(net));
  for (double v : back.theta[1].run_mean.data) CHECK(v == 0.0);
  for (double v : back.theta[1].run_var.data) CHECK(v == 1.0);
}

TEST_CASE("random_mask matches per-layer surviving counts") {
  Network net = mlp({20, 15, 5}, 6);
  Mask ref = full_mask(net);
  CHECK(random_mask(ref, 1).weights[0].data == ref.weights[0].data);

  for (int round = 0; round < 3; ++round)
    ref = prune_step(net.theta, ref, 0.3);

  for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
    Mask rnd = random_mask(ref, seed);
    for (std::size_t i = 0; i < ref.weights.size(); ++i) {
      if (ref.weights[i].empty()) continue;
      CHECK(layer_ones(rnd, i) == layer_ones(ref, i));
    }
    CHECK(sparsity(rnd) == sparsity(ref));
  }

  Mask a = random_mask(ref, 7);
  Mask b = random_mask(ref, 7);
  for (std::size_t i = 0; i < a.weights.size(); ++i)
    CHECK(a.weights[i].data == b.weights[i].data);
  Mask c = random_mask(ref, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.weights.size(); ++i)
    if (a.weights[i].data != c.weights[i].data) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("iterated floor arithmetic matches the brute-force simulation") {
  Network net = mlp({10, 10, 10}, 7);  // layers of 100 and 100 weights
  Mask m = full_mask(net);
  std::vector<std::size_t> expect = {100, 100};
  for (std::size_t r = 1; r <= 12; ++r) {
    m = prune_step(net.theta, m, 0.1);
    expect = floor_rule_counts(expect, 0.1, 1);
    CHECK(layer_ones(m, 0) == expect[0]);
    CHECK(layer_ones(m, 2) == expect[1]);
  }
}

TEST_CASE("run_imp produces nested, monotone, accurate tickets") {
  auto [train_ds, test_pool] = synth_blobs(2, 60, 2, 8.0, 11);
  auto [tr, val] = holdout_split(train_ds, 0.15, 1);

  Network base = mlp({2, 12, 2}, 8);
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.batch_size = 10;
  cfg.max_epochs = 4;
  cfg.seed = 21;

  std::size_t rounds = 4;
  std::vector<Ticket> tickets =
      run_imp(base, tr, val, test_pool, cfg, 0.2, rounds, 4);
  REQUIRE(tickets.size() == rounds + 1);

  CHECK(tickets[0].round == 0);
  CHECK(tickets[0].p_m == 1.0);

  for (std::size_t r = 1; r <= rounds; ++r) {
    // Monotone sparsity.
    CHECK(tickets[r].p_m < tickets[r - 1].p_m);
    // Nesting: ones of round r are a subset of round r-1's.
    for (std::size_t i = 0; i < tickets[r].mask.weights.size(); ++i) {
      const Tensor& cur = tickets[r].mask.weights[i];
      const Tensor& prev = tickets[r - 1].mask.weights[i];
      if (cur.empty()) continue;
      for (std::size_t k = 0; k < cur.data.size(); ++k)
        if (cur.data[k] == 1.0) CHECK(prev.data[k] == 1.0);
    }
    // P_m bookkeeping.
    CHECK(tickets[r].p_m == sparsity(tickets[r].mask));
    // Rewound network stays inside the mask and on init values.
    for (std::size_t i = 0; i < tickets[r].mask.weights.size(); ++i) {
      const Tensor& mw = tickets[r].mask.weights[i];
      if (mw.empty()) continue;
      for (std::size_t k = 0; k < mw.data.size(); ++k) {
        double expect = mw.data[k] * base.theta_init[i].weight.data[k];
        CHECK(tickets[r].rewound.theta[i].weight.data[k] == expect);
      }
    }
    // Biases never pruned: rewound biases equal the initialization.
    for (std::size_t i = 0; i < base.theta.size(); ++i)
      CHECK(tickets[r].rewound.theta[i].bias.data ==
            base.theta_init[i].bias.data);
  }

  // Per-layer surviving fractions follow iterated floor arithmetic.
  std::vector<std::size_t> expect = {24, 24};  // 2x12 and 12x2 weights
  expect = floor_rule_counts(expect, 0.2, rounds);
  CHECK(layer_ones(tickets[rounds].mask, 0) == expect[0]);
  CHECK(layer_ones(tickets[rounds].mask, 2) == expect[1]);

  CHECK_THROWS_AS(run_imp(base, tr, val, test_pool, cfg, 0.2, 0, 4),
                  std::invalid_argument);
}

TEST_CASE("closed-form surviving fraction for exact arithmetic") {
  // With layer sizes divisible enough, floor() tracks (1-p)^rounds closely;
  // the exact-count rule is authoritative, the closed form is the sanity
  // anchor.
  std::vector<std::size_t> sizes{100000};
  std::vector<std::size_t> counts = floor_rule_counts(sizes, 0.1, 35);
  double frac =
      static_cast<double>(counts[0]) / static_cast<double>(sizes[0] = 100000);
  CHECK(frac == doctest::Approx(std::pow(0.9, 35)).epsilon(0.01));
  CHECK(frac == doctest::Approx(0.025).epsilon(0.02));
}
