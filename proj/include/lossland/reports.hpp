#pragma once

#include <cstddef>
#include <vector>

#include "lossland/surface.hpp"

namespace lossland {

// One pruning round of an IMP-vs-random comparison.
struct ComparisonRow {
  std::size_t round = 0;
  double p_m = 1.0;
  double imp_accuracy = 0.0;
  double random_accuracy = 0.0;
  SurfaceStats imp_stats;
  SurfaceStats random_stats;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;  // ordered by round
  double final_gap = 0.0;           // imp - random accuracy at the last round
};

}  // namespace lossland
