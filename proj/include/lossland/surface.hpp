#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lossland/data_io.hpp"
#include "lossland/directions.hpp"
#include "lossland/network.hpp"

namespace lossland {

// Fixed random sample of an evaluation set, reused for every grid point of
// one surface. Built from the prefix of a seeded permutation, so subsets of
// growing n under the same seed are nested.
struct EvalSubset {
  std::string source;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> indices;  // sorted, unique
  Tensor images;                     // materialized, in index order
  std::vector<int> labels;
  std::size_t num_classes = 0;
};

EvalSubset make_eval_subset(const Dataset& ds, std::size_t n,
                            std::uint64_t seed);

struct GridSpec {
  double alpha_min = -1.0, alpha_max = 1.0;
  double beta_min = -1.0, beta_max = 1.0;
  std::size_t res_a = 51, res_b = 51;

  void validate() const;
  double alpha_at(std::size_t ia) const {
    return alpha_min + (alpha_max - alpha_min) * static_cast<double>(ia) /
                           static_cast<double>(res_a - 1);
  }
  double beta_at(std::size_t ib) const {
    return beta_min + (beta_max - beta_min) * static_cast<double>(ib) /
                          static_cast<double>(res_b - 1);
  }
  bool origin_on_grid() const;
};

// Non-finite grid losses are stored as this sentinel (quiet NaN); a cell
// holding it means the loss overflowed, it never aborts the grid.
inline constexpr double kLossSentinel =
    std::numeric_limits<double>::quiet_NaN();
inline bool finite_loss(double v) { return std::isfinite(v); }

struct SurfaceMeta {
  std::uint64_t d1_seed = 0, d2_seed = 0;
  std::string checkpoint_digest;  // hex crc of the evaluated checkpoint
  std::string mask_digest;        // empty when no mask
  std::string subset_source;
  std::size_t subset_n = 0;
  std::uint64_t subset_seed = 0;
  std::string loss_kind = "mean_cross_entropy";
  std::size_t evals_per_point = 0;
  double wall_seconds = 0.0;  // in-memory only, never serialized
  std::map<std::string, std::string> extra;
};

struct SurfaceGrid {
  GridSpec spec;
  std::vector<double> losses;  // res_a x res_b, alpha-major
  double center_loss = 0.0;
  SurfaceMeta meta;

  double& at(std::size_t ia, std::size_t ib) {
    return losses[ia * spec.res_b + ib];
  }
  double at(std::size_t ia, std::size_t ib) const {
    return losses[ia * spec.res_b + ib];
  }
};

// theta = theta_star + alpha*d1 + beta*d2, element-wise over all trainable
// tensors (direction bias/batch-norm components are zero, so only weights
// move). Running statistics pass through unchanged.
ParamSet perturb(const ParamSet& theta_star, const Direction& d1,
                 const Direction& d2, double alpha, double beta);

// Mean loss of the network on the subset, eval mode, fixed chunk size.
double subset_loss(const Network& net, const Mask* mask,
                   const EvalSubset& subset);

// Evaluates the loss at every (alpha, beta) grid point around net's theta.
// Directions must be filter_normalized. The result is bit-identical for
// any worker count: grid points are independent, each worker perturbs into
// its own parameter buffer, and cells are written disjointly.
SurfaceGrid evaluate_surface(const Network& net, const Mask* mask,
                             const DirectionPair& pair, const GridSpec& spec,
                             const EvalSubset& subset, std::size_t workers,
                             std::ostream* progress = nullptr);

struct SurfaceStats {
  double center_loss = 0.0;
  double min_loss = 0.0;
  double max_finite_loss = 0.0;
  double depth = 0.0;               // max_finite_loss - center_loss
  double flat_area_fraction = 0.0;  // finite cells within epsilon of center
};

SurfaceStats surface_stats(const SurfaceGrid& grid, double epsilon);

// Pearson correlation over pairs where both values are finite.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace lossland
