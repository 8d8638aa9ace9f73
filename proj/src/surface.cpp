#include "lossland/surface.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "lossland/rng.hpp"

namespace lossland {

EvalSubset make_eval_subset(const Dataset& ds, std::size_t n,
                            std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("eval subset: n must be >= 1");
  if (n > ds.size())
    throw std::invalid_argument("eval subset: n=" + std::to_string(n) +
                                " exceeds dataset size " +
                                std::to_string(ds.size()));
  std::vector<std::size_t> perm(ds.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(mix_seed(seed, 0x5b5e7));
  rng.shuffle(perm);

  EvalSubset subset;
  subset.source = ds.source;
  subset.n = n;
  subset.seed = seed;
  subset.indices.assign(perm.begin(), perm.begin() + n);
  std::sort(subset.indices.begin(), subset.indices.end());
  subset.images = ds.gather(subset.indices);
  subset.labels = ds.gather_labels(subset.indices);
  subset.num_classes = ds.num_classes;
  return subset;
}

void GridSpec::validate() const {
  if (!(alpha_min < alpha_max) || !(beta_min < beta_max))
    throw std::invalid_argument("grid: min must be < max on both axes");
  if (res_a < 2 || res_b < 2)
    throw std::invalid_argument("grid: resolution must be >= 2 on both axes");
}

bool GridSpec::origin_on_grid() const {
  auto on_axis = [](double lo, double hi, std::size_t res) {
    for (std::size_t i = 0; i < res; ++i) {
      double v = lo + (hi - lo) * static_cast<double>(i) /
                          static_cast<double>(res - 1);
      if (v == 0.0) return true;
    }
    return false;
  };
  return on_axis(alpha_min, alpha_max, res_a) &&
         on_axis(beta_min, beta_max, res_b);
}

ParamSet perturb(const ParamSet& theta_star, const Direction& d1,
                 const Direction& d2, double alpha, double beta) {
  if (theta_star.size() != d1.delta.size() ||
      theta_star.size() != d2.delta.size())
    throw std::invalid_argument("perturb: layer count mismatch");
  ParamSet out = theta_star;
  for (std::size_t i = 0; i < out.size(); ++i) {
    Tensor* ts[] = {&out[i].weight, &out[i].bias, &out[i].gamma,
                    &out[i].beta};
    const Tensor* t1[] = {&d1.delta[i].weight, &d1.delta[i].bias,
                          &d1.delta[i].gamma, &d1.delta[i].beta};
    const Tensor* t2[] = {&d2.delta[i].weight, &d2.delta[i].bias,
                          &d2.delta[i].gamma, &d2.delta[i].beta};
    for (int f = 0; f < 4; ++f) {
      Tensor& t = *ts[f];
      if (t.empty()) continue;
      if (!t.same_shape(*t1[f]) || !t.same_shape(*t2[f]))
        throw std::invalid_argument("perturb: shape mismatch at layer " +
                                    std::to_string(i));
      for (std::size_t k = 0; k < t.data.size(); ++k)
        t.data[k] += alpha * t1[f]->data[k] + beta * t2[f]->data[k];
    }
  }
  return out;
}

namespace {

constexpr std::size_t kPointChunk = 256;

// Loss at one grid point. Catches shape-preserving numeric blowups
// (overflow to inf/nan in the forward pass) and maps them to the sentinel.
double point_loss(const Network& net, const Mask* mask, const Tensor& images,
                  const std::vector<int>& labels) {
  std::size_t count = labels.size();
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < count; start += kPointChunk) {
    std::size_t chunk = std::min(kPointChunk, count - start);
    std::vector<std::size_t> shape = images.shape;
    shape[0] = chunk;
    std::size_t stride = images.numel() / images.shape[0];
    Tensor x;
    x.shape = shape;
    x.data.assign(images.data.begin() + start * stride,
                  images.data.begin() + (start + chunk) * stride);
    std::vector<int> y(labels.begin() + start, labels.begin() + start + chunk);
    Tensor logits = forward(net, mask, x, Mode::eval, 0);
    for (double v : logits.data)
      if (!std::isfinite(v)) return kLossSentinel;
    total += cross_entropy(logits, y) * static_cast<double>(chunk);
  }
  double loss = total / static_cast<double>(count);
  return std::isfinite(loss) ? loss : kLossSentinel;
}

}  // namespace

double subset_loss(const Network& net, const Mask* mask,
                   const EvalSubset& subset) {
  if (subset.n == 0) throw std::invalid_argument("subset_loss: empty subset");
  return point_loss(net, mask, subset.images, subset.labels);
}

SurfaceGrid evaluate_surface(const Network& net, const Mask* mask,
                             const DirectionPair& pair, const GridSpec& spec,
                             const EvalSubset& subset, std::size_t workers,
                             std::ostream* progress) {
  spec.validate();
  if (pair.d1.status != NormStatus::filter_normalized ||
      pair.d2.status != NormStatus::filter_normalized)
    throw std::invalid_argument(
        "evaluate_surface: directions must be filter_normalized");
  if (subset.n == 0 || subset.labels.empty())
    throw std::invalid_argument("evaluate_surface: empty eval subset");
  if (!spec.origin_on_grid())
    std::cerr << "warning: (0,0) is not on the surface grid; center loss is "
                 "computed separately\n";
  if (workers == 0) workers = 1;

  auto t0 = std::chrono::steady_clock::now();

  SurfaceGrid grid;
  grid.spec = spec;
  grid.losses.assign(spec.res_a * spec.res_b, kLossSentinel);
  grid.meta.d1_seed = pair.d1.seed;
  grid.meta.d2_seed = pair.d2.seed;
  grid.meta.subset_source = subset.source;
  grid.meta.subset_n = subset.n;
  grid.meta.subset_seed = subset.seed;
  grid.meta.evals_per_point = subset.n;

  // Row-granular work queue; each worker owns a private network whose theta
  // is overwritten per point, so cells depend only on (alpha, beta).
  std::atomic<std::size_t> next_row{0};
  std::atomic<std::size_t> rows_done{0};
  std::mutex progress_mu;

  auto worker_fn = [&]() {
    Network local = net;
    for (;;) {
      std::size_t ia = next_row.fetch_add(1);
      if (ia >= spec.res_a) return;
      double alpha = spec.alpha_at(ia);
      for (std::size_t ib = 0; ib < spec.res_b; ++ib) {
        double beta = spec.beta_at(ib);
        local.theta = perturb(net.theta, pair.d1, pair.d2, alpha, beta);
        grid.at(ia, ib) = point_loss(local, mask, subset.images,
                                     subset.labels);
      }
      std::size_t done = rows_done.fetch_add(1) + 1;
      if (progress != nullptr) {
        std::lock_guard<std::mutex> lock(progress_mu);
        (*progress) << "surface row " << done << "/" << spec.res_a << "\n";
      }
    }
  };

  std::size_t spawn = std::min(workers, spec.res_a);
  if (spawn <= 1) {
    worker_fn();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(spawn);
    for (std::size_t w = 0; w < spawn; ++w) pool.emplace_back(worker_fn);
    for (auto& th : pool) th.join();
  }

  // Center loss through the identical per-point path at (0,0).
  {
    Network local = net;
    local.theta = perturb(net.theta, pair.d1, pair.d2, 0.0, 0.0);
    grid.center_loss = point_loss(local, mask, subset.images, subset.labels);
  }

  grid.meta.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return grid;
}

SurfaceStats surface_stats(const SurfaceGrid& grid, double epsilon) {
  if (epsilon <= 0.0)
    throw std::invalid_argument("surface_stats: epsilon must be > 0");
  SurfaceStats st;
  st.center_loss = grid.center_loss;
  double mn = std::numeric_limits<double>::infinity();
  double mx = -std::numeric_limits<double>::infinity();
  std::size_t finite = 0, flat = 0;
  for (double v : grid.losses) {
    if (!finite_loss(v)) continue;
    ++finite;
    mn = std::min(mn, v);
    mx = std::max(mx, v);
    if (std::abs(v - grid.center_loss) <= epsilon) ++flat;
  }
  if (finite == 0)
    throw std::runtime_error("surface_stats: grid has no finite losses");
  st.min_loss = mn;
  st.max_finite_loss = mx;
  st.depth = mx - grid.center_loss;
  st.flat_area_fraction =
      static_cast<double>(flat) / static_cast<double>(finite);
  return st;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("pearson: length mismatch");
  double sa = 0, sb = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) continue;
    sa += a[i];
    sb += b[i];
    ++n;
  }
  if (n < 2) throw std::invalid_argument("pearson: fewer than 2 finite pairs");
  double ma = sa / static_cast<double>(n), mb = sb / static_cast<double>(n);
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) continue;
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0)
    return (va == 0.0 && vb == 0.0) ? 1.0 : 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace lossland
