#include "lossland/optim.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "lossland/rng.hpp"

namespace lossland {

void TrainConfig::validate(std::size_t train_size) const {
  if (learning_rate <= 0.0)
    throw std::invalid_argument("train config: learning_rate must be > 0");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0)
    throw std::invalid_argument("train config: betas must be in [0,1)");
  if (adam_eps <= 0.0)
    throw std::invalid_argument("train config: adam_eps must be > 0");
  if (batch_size == 0)
    throw std::invalid_argument("train config: batch_size must be > 0");
  if (batch_size > train_size)
    throw std::invalid_argument("train config: batch_size " +
                                std::to_string(batch_size) +
                                " exceeds training set size " +
                                std::to_string(train_size));
  if (max_epochs == 0)
    throw std::invalid_argument("train config: max_epochs must be > 0");
}

namespace {

void check_finite(const Gradients& grads) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Tensor* ts[] = {&grads[i].weight, &grads[i].bias, &grads[i].gamma,
                          &grads[i].beta};
    for (const Tensor* t : ts)
      for (double v : t->data)
        if (!std::isfinite(v))
          throw std::runtime_error("optimizer: non-finite gradient at layer " +
                                   std::to_string(i));
  }
}

void reapply_mask(ParamSet& theta, const Mask& mask) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const Tensor& m = mask.weights[i];
    if (m.empty()) continue;
    Tensor& w = theta[i].weight;
    for (std::size_t k = 0; k < w.data.size(); ++k) w.data[k] *= m.data[k];
  }
}

}  // namespace

void sgd_step(ParamSet& theta, const Gradients& grads, const Mask* mask,
              double lr, const std::vector<LayerSpec>&) {
  check_finite(grads);
  for_each_trainable_pair(theta, grads,
                          [&](std::size_t, Tensor& t, const Tensor& g) {
                            for (std::size_t k = 0; k < t.data.size(); ++k)
                              t.data[k] -= lr * g.data[k];
                          });
  if (mask != nullptr) reapply_mask(theta, *mask);
}

AdamState make_adam_state(const Network& net) {
  AdamState st;
  st.m = zero_gradients(net);
  st.v = zero_gradients(net);
  st.step = 0;
  return st;
}

void adam_step(ParamSet& theta, const Gradients& grads, const Mask* mask,
               AdamState& state, const TrainConfig& cfg,
               const std::vector<LayerSpec>&) {
  check_finite(grads);
  state.step += 1;
  double t = static_cast<double>(state.step);
  double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
  double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);

  for (std::size_t i = 0; i < theta.size(); ++i) {
    Tensor* ts[] = {&theta[i].weight, &theta[i].bias, &theta[i].gamma,
                    &theta[i].beta};
    const Tensor* gs[] = {&grads[i].weight, &grads[i].bias, &grads[i].gamma,
                          &grads[i].beta};
    Tensor* ms[] = {&state.m[i].weight, &state.m[i].bias, &state.m[i].gamma,
                    &state.m[i].beta};
    Tensor* vs[] = {&state.v[i].weight, &state.v[i].bias, &state.v[i].gamma,
                    &state.v[i].beta};
    for (int f = 0; f < 4; ++f) {
      Tensor& th = *ts[f];
      if (th.empty()) continue;
      const Tensor& g = *gs[f];
      Tensor& m = *ms[f];
      Tensor& v = *vs[f];
      for (std::size_t k = 0; k < th.data.size(); ++k) {
        m.data[k] = cfg.adam_beta1 * m.data[k] +
                    (1.0 - cfg.adam_beta1) * g.data[k];
        v.data[k] = cfg.adam_beta2 * v.data[k] +
                    (1.0 - cfg.adam_beta2) * g.data[k] * g.data[k];
        double mhat = m.data[k] / bc1;
        double vhat = v.data[k] / bc2;
        th.data[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) +
                                                  cfg.adam_eps);
      }
    }
  }
  if (mask != nullptr) {
    reapply_mask(theta, *mask);
    zero_masked_moments(state, *mask);
  }
}

void zero_masked_moments(AdamState& state, const Mask& mask) {
  for (std::size_t i = 0; i < mask.weights.size(); ++i) {
    const Tensor& m = mask.weights[i];
    if (m.empty()) continue;
    for (std::size_t k = 0; k < m.data.size(); ++k) {
      if (m.data[k] == 0.0) {
        state.m[i].weight.data[k] = 0.0;
        state.v[i].weight.data[k] = 0.0;
      }
    }
  }
}

namespace {

constexpr std::size_t kEvalChunk = 256;

}  // namespace

EvalResult evaluate(const Network& net, const Mask* mask, const Dataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  double total_loss = 0.0;
  std::size_t correct = 0;
  std::size_t classes = net.num_classes();
  for (std::size_t start = 0; start < ds.size(); start += kEvalChunk) {
    std::size_t count = std::min(kEvalChunk, ds.size() - start);
    std::vector<std::size_t> idx(count);
    for (std::size_t k = 0; k < count; ++k) idx[k] = start + k;
    Tensor x = ds.gather(idx);
    std::vector<int> y = ds.gather_labels(idx);
    Tensor logits = forward(net, mask, x, Mode::eval, 0);
    total_loss += cross_entropy(logits, y) * static_cast<double>(count);
    for (std::size_t n = 0; n < count; ++n) {
      const double* lp = logits.data.data() + n * classes;
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (lp[c] > lp[best]) best = c;
      if (static_cast<int>(best) == y[n]) ++correct;
    }
  }
  return {total_loss / static_cast<double>(ds.size()),
          static_cast<double>(correct) / static_cast<double>(ds.size())};
}

TrainResult train(const Network& net, const Mask* mask,
                  const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, std::ostream* progress) {
  if (train_set.size() == 0 || val_set.size() == 0)
    throw std::invalid_argument("train: empty dataset");
  cfg.validate(train_set.size());

  auto t0 = std::chrono::steady_clock::now();

  Network work = net;
  if (mask != nullptr) {
    check_mask_congruent(work, *mask);
    reapply_mask(work.theta, *mask);
  }

  AdamState adam = make_adam_state(work);
  Rng shuffle_rng(mix_seed(cfg.seed, 0x5bf1e));

  TrainReport report;
  Network best = work;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t since_improve = 0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size, ++step) {
      std::size_t count = std::min(cfg.batch_size, order.size() - start);
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + start + count);
      Tensor x = train_set.gather(idx);
      std::vector<int> y = train_set.gather_labels(idx);
      std::uint64_t dropout_seed = mix_seed(cfg.seed, epoch + 1, step);
      ForwardTrace trace;
      BackwardResult bw =
          backward(work, mask, x, y, Mode::train, dropout_seed, &trace);
      absorb_batch_stats(work, trace);
      if (cfg.optimizer == TrainConfig::Optimizer::adam)
        adam_step(work.theta, bw.grads, mask, adam, cfg, work.layers);
      else
        sgd_step(work.theta, bw.grads, mask, cfg.learning_rate, work.layers);
      epoch_loss += bw.loss * static_cast<double>(count);
    }
    epoch_loss /= static_cast<double>(order.size());

    EvalResult val = evaluate(work, mask, val_set);
    report.train_loss.push_back(epoch_loss);
    report.val_loss.push_back(val.loss);
    report.val_acc.push_back(val.accuracy);

    if (progress != nullptr)
      (*progress) << "epoch " << epoch << " train_loss " << epoch_loss
                  << " val_loss " << val.loss << " val_acc " << val.accuracy
                  << "\n";

    if (val.loss < best_val) {
      best_val = val.loss;
      best_epoch = epoch;
      best = work;
      since_improve = 0;
    } else {
      ++since_improve;
      if (cfg.early_stop_patience > 0 &&
          since_improve >= cfg.early_stop_patience)
        break;
    }
  }

  report.best_epoch = best_epoch;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return {std::move(best), std::move(report)};
}

std::pair<Dataset, Dataset> holdout_split(const Dataset& ds, double val_frac,
                                          std::uint64_t seed) {
  if (ds.size() < 2)
    throw std::invalid_argument("holdout: dataset too small to split");
  std::size_t val_n = static_cast<std::size_t>(
      std::floor(static_cast<double>(ds.size()) * val_frac));
  val_n = std::max<std::size_t>(val_n, 1);
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x401d));
  rng.shuffle(order);

  std::vector<std::size_t> val_idx(order.begin(), order.begin() + val_n);
  std::vector<std::size_t> train_idx(order.begin() + val_n, order.end());

  auto make = [&](const std::vector<std::size_t>& idx, const char* split) {
    Dataset out;
    out.images = ds.gather(idx);
    out.labels = ds.gather_labels(idx);
    out.num_classes = ds.num_classes;
    out.split = split;
    out.source = ds.source;
    return out;
  };
  return {make(train_idx, "train"), make(val_idx, "val")};
}

}  // namespace lossland
