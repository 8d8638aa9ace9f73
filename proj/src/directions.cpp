#include "lossland/directions.hpp"

#include <cmath>
#include <stdexcept>

#include "lossland/rng.hpp"

namespace lossland {

Direction sample_direction(const Network& net, std::uint64_t seed) {
  Direction d;
  d.seed = seed;
  d.status = NormStatus::raw;
  d.delta = zero_gradients(net);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!has_weights(net.layers[i].kind)) continue;
    Rng rng(mix_seed(seed, i));
    for (double& v : d.delta[i].weight.data) v = rng.normal();
  }
  return d;
}

Direction filter_normalize(Direction d, const Network& net, const Mask* mask) {
  if (d.delta.size() != net.theta.size())
    throw std::invalid_argument("filter_normalize: layer count mismatch");
  for (std::size_t i = 0; i < net.theta.size(); ++i)
    if (!d.delta[i].weight.same_shape(net.theta[i].weight))
      throw std::invalid_argument(
          "filter_normalize: shape mismatch at layer " + std::to_string(i));
  if (mask != nullptr) check_mask_congruent(net, *mask);

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!has_weights(net.layers[i].kind)) continue;
    std::size_t count = filter_count(net.layers[i]);
    std::size_t len = filter_length(net.layers[i]);
    const double* theta = net.theta[i].weight.data.data();
    const double* m = (mask != nullptr && !mask->weights[i].empty())
                          ? mask->weights[i].data.data()
                          : nullptr;
    double* dv = d.delta[i].weight.data.data();
    for (std::size_t j = 0; j < count; ++j) {
      std::size_t off = j * len;
      double tn = 0.0, dn = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        double tw = theta[off + k] * (m ? m[off + k] : 1.0);
        tn += tw * tw;
        dn += dv[off + k] * dv[off + k];
      }
      tn = std::sqrt(tn);
      dn = std::sqrt(dn);
      double scale = (tn == 0.0 || dn == 0.0) ? 0.0 : tn / dn;
      for (std::size_t k = 0; k < len; ++k) dv[off + k] *= scale;
    }
  }
  d.status = NormStatus::filter_normalized;
  return d;
}

Direction restrict_to_mask(Direction d, const Mask& mask) {
  if (d.delta.size() != mask.weights.size())
    throw std::invalid_argument("restrict_to_mask: layer count mismatch");
  for (std::size_t i = 0; i < mask.weights.size(); ++i) {
    const Tensor& m = mask.weights[i];
    if (m.empty()) continue;
    Tensor& w = d.delta[i].weight;
    if (!w.same_shape(m))
      throw std::invalid_argument("restrict_to_mask: shape mismatch at layer " +
                                  std::to_string(i));
    for (std::size_t k = 0; k < w.data.size(); ++k) w.data[k] *= m.data[k];
  }
  return d;
}

DirectionPair make_direction_pair(const Network& net, std::uint64_t s1,
                                  std::uint64_t s2, const Mask* mask) {
  if (s1 == s2)
    throw std::invalid_argument("direction pair: seeds must differ");
  DirectionPair pair;
  pair.d1 = sample_direction(net, s1);
  pair.d2 = sample_direction(net, s2);
  if (mask != nullptr) {
    pair.d1 = restrict_to_mask(std::move(pair.d1), *mask);
    pair.d2 = restrict_to_mask(std::move(pair.d2), *mask);
  }
  pair.d1 = filter_normalize(std::move(pair.d1), net, mask);
  pair.d2 = filter_normalize(std::move(pair.d2), net, mask);
  return pair;
}

double direction_cosine(const Direction& a, const Direction& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.delta.size(); ++i) {
    const Tensor& wa = a.delta[i].weight;
    const Tensor& wb = b.delta[i].weight;
    for (std::size_t k = 0; k < wa.data.size(); ++k) {
      dot += wa.data[k] * wb.data[k];
      na += wa.data[k] * wa.data[k];
      nb += wb.data[k] * wb.data[k];
    }
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace lossland
