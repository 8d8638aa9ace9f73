#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lossland/directions.hpp"
#include "lossland/pruning.hpp"
#include "lossland/rng.hpp"

using namespace lossland;

namespace {

Network small_net(std::uint64_t seed) {
  return build_network({LayerSpec::Dense(6, 8), LayerSpec::BatchNorm(),
                        LayerSpec::Relu(), LayerSpec::Dense(8, 4)},
                       {6}, seed);
}

// Independent per-filter norm: plain elementwise square-sum pass.
double filter_norm(const ParamSet& params, const std::vector<LayerSpec>& layers,
                   std::size_t layer, std::size_t j) {
  std::size_t len = filter_length(layers[layer]);
  const double* p = params[layer].weight.data.data() + j * len;
  double acc = 0.0;
  for (std::size_t k = 0; k < len; ++k) acc += p[k] * p[k];
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("sampling is seeded and zero on bias/batch-norm components") {
  Network net = small_net(3);
  Direction a = sample_direction(net, 42);
  Direction b = sample_direction(net, 42);
  CHECK(a.status == NormStatus::raw);
  CHECK(a.seed == 42);
  for (std::size_t i = 0; i < a.delta.size(); ++i)
    CHECK(a.delta[i].weight.data == b.delta[i].weight.data);

  Direction c = sample_direction(net, 43);
  CHECK(a.delta[0].weight.data != c.delta[0].weight.data);

  for (const LayerParams& lp : a.delta) {
    for (double v : lp.bias.data) CHECK(v == 0.0);
    for (double v : lp.gamma.data) CHECK(v == 0.0);
    for (double v : lp.beta.data) CHECK(v == 0.0);
  }
}

TEST_CASE("sampled entries look standard normal") {
  // 400 x 250 = 100k weight entries.
  Network wide = build_network({LayerSpec::Dense(400, 250)}, {400}, 5);
  Direction d = sample_direction(wide, 777);
  const auto& v = d.delta[0].weight.data;
  double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("filter_normalize matches theta filter norms") {
  Network net = small_net(7);
  Direction d = filter_normalize(sample_direction(net, 9), net);
  CHECK(d.status == NormStatus::filter_normalized);

  for_each_filter(
      net.layers, net.theta,
      [&](std::size_t i, std::size_t j, std::span<const double>) {
        double tn = filter_norm(net.theta, net.layers, i, j);
        double dn = filter_norm(d.delta, net.layers, i, j);
        REQUIRE(tn > 0.0);
        CHECK(std::abs(dn - tn) / tn <= 1e-9);
      });
}

TEST_CASE("filter_normalize scales a known filter to the theta norm") {
  Network net = build_network({LayerSpec::Dense(2, 1)}, {2}, 1);
  net.theta[0].weight = Tensor::from({1, 2}, {3.0, 0.0});  // norm 3
  Direction d = sample_direction(net, 1);
  d.delta[0].weight = Tensor::from({1, 2}, {0.9, 1.2});  // norm 1.5
  Direction out = filter_normalize(std::move(d), net);
  CHECK(out.delta[0].weight.data[0] == doctest::Approx(1.8).epsilon(1e-12));
  CHECK(out.delta[0].weight.data[1] == doctest::Approx(2.4).epsilon(1e-12));
}

TEST_CASE("zero theta filter forces a zero direction filter") {
  Network net = build_network({LayerSpec::Dense(3, 2)}, {3}, 2);
  for (std::size_t k = 0; k < 3; ++k) net.theta[0].weight.at({1, k}) = 0.0;
  Direction d = filter_normalize(sample_direction(net, 4), net);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(d.delta[0].weight.at({1, k}) == 0.0);
  // The other filter is still scaled to its norm.
  double tn = filter_norm(net.theta, net.layers, 0, 0);
  double dn = filter_norm(d.delta, net.layers, 0, 0);
  CHECK(std::abs(dn - tn) / tn <= 1e-9);
}

TEST_CASE("restrict_to_mask zeroes pruned coordinates") {
  Network net = small_net(11);
  Mask ones = full_mask(net);
  Direction d = sample_direction(net, 21);
  Direction same = restrict_to_mask(d, ones);
  for (std::size_t i = 0; i < d.delta.size(); ++i)
    CHECK(same.delta[i].weight.data == d.delta[i].weight.data);

  Mask m = prune_step(net.theta, ones, 0.4);
  Direction cut = restrict_to_mask(d, m);
  for (std::size_t i = 0; i < cut.delta.size(); ++i) {
    if (m.weights[i].empty()) continue;
    for (std::size_t k = 0; k < m.weights[i].data.size(); ++k)
      if (m.weights[i].data[k] == 0.0)
        CHECK(cut.delta[i].weight.data[k] == 0.0);
  }
}

TEST_CASE("mask-then-normalize matches masked theta filter norms") {
  Network net = small_net(13);
  Mask m = prune_step(net.theta, full_mask(net), 0.5);

  DirectionPair pair = make_direction_pair(net, 31, 32, &m);

  // Masked theta for the reference norms.
  ParamSet masked = net.theta;
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (m.weights[i].empty()) continue;
    for (std::size_t k = 0; k < masked[i].weight.data.size(); ++k)
      masked[i].weight.data[k] *= m.weights[i].data[k];
  }

  for (const Direction* d : {&pair.d1, &pair.d2}) {
    CHECK(d->status == NormStatus::filter_normalized);
    for_each_filter(net.layers, net.theta,
                    [&](std::size_t i, std::size_t j, std::span<const double>) {
                      double tn = filter_norm(masked, net.layers, i, j);
                      double dn = filter_norm(d->delta, net.layers, i, j);
                      if (tn == 0.0)
                        CHECK(dn == 0.0);
                      else
                        CHECK(std::abs(dn - tn) / tn <= 1e-9);
                    });
    // Sparsity preserved.
    for (std::size_t i = 0; i < d->delta.size(); ++i) {
      if (m.weights[i].empty()) continue;
      for (std::size_t k = 0; k < m.weights[i].data.size(); ++k)
        if (m.weights[i].data[k] == 0.0)
          CHECK(d->delta[i].weight.data[k] == 0.0);
    }
  }
}

TEST_CASE("distinct seeds give nearly orthogonal directions") {
  // 128 x 100 = 12.8k parameters.
  Network wide = build_network({LayerSpec::Dense(128, 100)}, {128}, 17);
  DirectionPair pair = make_direction_pair(wide, 101, 202);
  CHECK(std::abs(direction_cosine(pair.d1, pair.d2)) < 0.1);
}

TEST_CASE("direction pair rejects equal seeds and shape mismatches") {
  Network net = small_net(19);
  CHECK_THROWS_AS(make_direction_pair(net, 5, 5), std::invalid_argument);

  Network other = build_network({LayerSpec::Dense(3, 3)}, {3}, 1);
  Direction d = sample_direction(other, 1);
  CHECK_THROWS_AS(filter_normalize(std::move(d), net), std::invalid_argument);
}
