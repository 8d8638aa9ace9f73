#pragma once

#include <cstdint>

#include "lossland/network.hpp"

namespace lossland {

enum class NormStatus { raw, filter_normalized };

// Random perturbation direction, shape-congruent with a network's theta.
// Bias and batch-norm components are always exactly zero.
struct Direction {
  ParamSet delta;
  NormStatus status = NormStatus::raw;
  std::uint64_t seed = 0;
};

struct DirectionPair {
  Direction d1, d2;
};

// Weight entries i.i.d. standard normal from a seeded stream; everything
// else zero.
Direction sample_direction(const Network& net, std::uint64_t seed);

// Rescales each filter slice of d so its Frobenius norm equals the norm of
// the corresponding theta filter (masked theta when a mask is given).
// Filters with zero theta norm come out exactly zero.
Direction filter_normalize(Direction d, const Network& net,
                           const Mask* mask = nullptr);

// d <- d (.) m. Apply before filter_normalize so normalization sees the
// masked weights.
Direction restrict_to_mask(Direction d, const Mask& mask);

// Two independent filter-normalized directions for one surface. Restricted
// to the mask first when one is given. Requires s1 != s2.
DirectionPair make_direction_pair(const Network& net, std::uint64_t s1,
                                  std::uint64_t s2,
                                  const Mask* mask = nullptr);

// Cosine similarity of the flattened weight components.
double direction_cosine(const Direction& a, const Direction& b);

}  // namespace lossland
