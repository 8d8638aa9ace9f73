#include "lossland/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lossland/rng.hpp"

namespace lossland {

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::dropout: return "dropout";
    case LayerKind::flatten: return "flatten";
    case LayerKind::avg_pool: return "avg_pool";
    case LayerKind::residual_add: return "residual_add";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  for (LayerKind k :
       {LayerKind::dense, LayerKind::conv2d, LayerKind::relu,
        LayerKind::batch_norm, LayerKind::dropout, LayerKind::flatten,
        LayerKind::avg_pool, LayerKind::residual_add})
    if (layer_kind_name(k) == name) return k;
  throw std::invalid_argument("unknown layer kind: " + name);
}

LayerSpec LayerSpec::Dense(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_features = in;
  s.out_features = out;
  return s;
}
LayerSpec LayerSpec::Conv2d(std::size_t in_ch, std::size_t out_ch,
                            std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}
LayerSpec LayerSpec::Relu() {
  LayerSpec s;
  s.kind = LayerKind::relu;
  return s;
}
LayerSpec LayerSpec::BatchNorm() {
  LayerSpec s;
  s.kind = LayerKind::batch_norm;
  return s;
}
LayerSpec LayerSpec::Dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.rate = rate;
  return s;
}
LayerSpec LayerSpec::Flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}
LayerSpec LayerSpec::AvgPool(std::size_t k) {
  LayerSpec s;
  s.kind = LayerKind::avg_pool;
  s.pool = k;
  return s;
}
LayerSpec LayerSpec::ResidualAdd(std::size_t skip_from) {
  LayerSpec s;
  s.kind = LayerKind::residual_add;
  s.skip_from = skip_from;
  return s;
}

std::size_t filter_count(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::dense: return spec.out_features;
    case LayerKind::conv2d: return spec.out_channels;
    default: return 0;
  }
}

std::size_t filter_length(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::dense: return spec.in_features;
    case LayerKind::conv2d:
      return spec.in_channels * spec.kernel * spec.kernel;
    default: return 0;
  }
}

namespace {

std::size_t product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

[[noreturn]] void shape_error(std::size_t i, const std::string& detail) {
  std::string prev = (i == 0) ? "input" : std::to_string(i - 1);
  throw std::invalid_argument("network build: shape error at layer pair (" +
                              prev + "," + std::to_string(i) + "): " + detail);
}

// Output shape of layer i given its input shape (batch dim excluded).
std::vector<std::size_t> infer_shape(
    const LayerSpec& spec, const std::vector<std::size_t>& in,
    const std::vector<std::vector<std::size_t>>& prior, std::size_t i) {
  switch (spec.kind) {
    case LayerKind::dense:
      if (in.size() != 1 || in[0] != spec.in_features)
        shape_error(i, "dense expects " + std::to_string(spec.in_features) +
                           " input features, got " + shape_string(in));
      if (spec.out_features == 0) shape_error(i, "dense with 0 outputs");
      return {spec.out_features};
    case LayerKind::conv2d: {
      if (in.size() != 3 || in[0] != spec.in_channels)
        shape_error(i, "conv2d expects (" + std::to_string(spec.in_channels) +
                           ",H,W) input, got " + shape_string(in));
      std::size_t h = in[1] + 2 * spec.padding;
      std::size_t w = in[2] + 2 * spec.padding;
      if (spec.kernel == 0 || spec.stride == 0 || h < spec.kernel ||
          w < spec.kernel)
        shape_error(i, "conv2d kernel does not fit input " + shape_string(in));
      std::size_t oh = (h - spec.kernel) / spec.stride + 1;
      std::size_t ow = (w - spec.kernel) / spec.stride + 1;
      return {spec.out_channels, oh, ow};
    }
    case LayerKind::relu:
    case LayerKind::dropout:
      if (spec.kind == LayerKind::dropout &&
          (spec.rate < 0.0 || spec.rate >= 1.0))
        throw std::invalid_argument(
            "network build: dropout rate must be in [0,1), got " +
            std::to_string(spec.rate));
      return in;
    case LayerKind::batch_norm:
      if (in.empty()) shape_error(i, "batch_norm on scalar input");
      return in;
    case LayerKind::flatten:
      return {product(in)};
    case LayerKind::avg_pool: {
      if (in.size() != 3)
        shape_error(i, "avg_pool expects (C,H,W) input, got " +
                           shape_string(in));
      if (spec.pool == 0 || in[1] % spec.pool != 0 || in[2] % spec.pool != 0)
        shape_error(i, "avg_pool window " + std::to_string(spec.pool) +
                           " does not tile input " + shape_string(in));
      return {in[0], in[1] / spec.pool, in[2] / spec.pool};
    }
    case LayerKind::residual_add: {
      if (spec.skip_from >= i)
        shape_error(i, "residual_add skip source must be an earlier layer");
      if (prior[spec.skip_from] != in)
        shape_error(i, "residual_add shapes differ: skip " +
                           shape_string(prior[spec.skip_from]) + " vs " +
                           shape_string(in));
      return in;
    }
  }
  throw std::logic_error("unreachable layer kind");
}

constexpr double kBnEps = 1e-5;

}  // namespace

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& lp : theta)
    n += lp.weight.numel() + lp.bias.numel() + lp.gamma.numel() +
         lp.beta.numel();
  return n;
}

Network build_network(const std::vector<LayerSpec>& spec,
                      const std::vector<std::size_t>& input_shape,
                      std::uint64_t seed) {
  if (spec.empty()) throw std::invalid_argument("network build: empty spec");
  Network net;
  net.layers = spec;
  net.input_shape = input_shape;
  net.seed = seed;

  std::vector<std::size_t> cur = input_shape;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    cur = infer_shape(spec[i], cur, net.out_shapes, i);
    net.out_shapes.push_back(cur);
  }

  net.theta.resize(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const LayerSpec& l = spec[i];
    LayerParams& lp = net.theta[i];
    Rng rng(mix_seed(seed, i));
    if (l.kind == LayerKind::dense) {
      lp.weight = Tensor({l.out_features, l.in_features});
      lp.bias = Tensor({l.out_features});
      double std_dev = std::sqrt(2.0 / static_cast<double>(l.in_features));
      for (double& w : lp.weight.data) w = rng.normal() * std_dev;
    } else if (l.kind == LayerKind::conv2d) {
      lp.weight = Tensor({l.out_channels, l.in_channels, l.kernel, l.kernel});
      lp.bias = Tensor({l.out_channels});
      double fan_in =
          static_cast<double>(l.in_channels * l.kernel * l.kernel);
      double std_dev = std::sqrt(2.0 / fan_in);
      for (double& w : lp.weight.data) w = rng.normal() * std_dev;
    } else if (l.kind == LayerKind::batch_norm) {
      std::size_t c =
          (i == 0 ? input_shape : net.out_shapes[i - 1]).front();
      lp.gamma = Tensor({c}, 1.0);
      lp.beta = Tensor({c}, 0.0);
      lp.run_mean = Tensor({c}, 0.0);
      lp.run_var = Tensor({c}, 1.0);
    }
  }
  net.theta_init = net.theta;
  return net;
}

void check_mask_congruent(const Network& net, const Mask& mask) {
  if (mask.weights.size() != net.layers.size())
    throw std::invalid_argument("mask: layer count mismatch");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Tensor& m = mask.weights[i];
    if (!has_weights(net.layers[i].kind)) {
      if (!m.empty())
        throw std::invalid_argument("mask: layer " + std::to_string(i) +
                                    " has no maskable weights");
      continue;
    }
    if (!m.same_shape(net.theta[i].weight))
      throw std::invalid_argument("mask: shape mismatch at layer " +
                                  std::to_string(i));
  }
}

namespace {

// Weight actually used by the layer: W, or m (.) W when a mask is present.
struct EffectiveWeight {
  Tensor storage;
  const Tensor* ptr = nullptr;
};

EffectiveWeight effective_weight(const Network& net, const Mask* mask,
                                 std::size_t i) {
  EffectiveWeight ew;
  const Tensor& w = net.theta[i].weight;
  if (mask != nullptr && i < mask->weights.size() &&
      !mask->weights[i].empty()) {
    ew.storage = w;
    const Tensor& m = mask->weights[i];
    for (std::size_t k = 0; k < ew.storage.data.size(); ++k)
      ew.storage.data[k] *= m.data[k];
    ew.ptr = &ew.storage;
  } else {
    ew.ptr = &w;
  }
  return ew;
}

std::vector<std::size_t> with_batch(std::size_t b,
                                    const std::vector<std::size_t>& s) {
  std::vector<std::size_t> out;
  out.reserve(s.size() + 1);
  out.push_back(b);
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

void dense_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                   Tensor& y) {
  std::size_t batch = x.shape[0], in = w.shape[1], out = w.shape[0];
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xp = x.data.data() + n * in;
    double* yp = y.data.data() + n * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wp = w.data.data() + o * in;
      double acc = b[o];
      for (std::size_t k = 0; k < in; ++k) acc += wp[k] * xp[k];
      yp[o] = acc;
    }
  }
}

void conv_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                  const LayerSpec& l, Tensor& y) {
  std::size_t batch = x.shape[0], c_in = x.shape[1], h = x.shape[2],
              wdt = x.shape[3];
  std::size_t f = y.shape[1], oh = y.shape[2], ow = y.shape[3];
  std::size_t k = l.kernel, s = l.stride;
  long pad = static_cast<long>(l.padding);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t fo = 0; fo < f; ++fo)
      for (std::size_t yo = 0; yo < oh; ++yo)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          double acc = b[fo];
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t kh = 0; kh < k; ++kh) {
              long yi = static_cast<long>(yo * s + kh) - pad;
              if (yi < 0 || yi >= static_cast<long>(h)) continue;
              for (std::size_t kw = 0; kw < k; ++kw) {
                long xi = static_cast<long>(xo * s + kw) - pad;
                if (xi < 0 || xi >= static_cast<long>(wdt)) continue;
                acc += x.data[((n * c_in + c) * h + yi) * wdt + xi] *
                       w.data[((fo * c_in + c) * k + kh) * k + kw];
              }
            }
          y.data[((n * f + fo) * oh + yo) * ow + xo] = acc;
        }
}

// Channel layout for batch_norm: rank-2 input (B,F) normalizes per feature,
// rank-4 input (B,C,H,W) per channel over (B,H,W).
struct BnLayout {
  std::size_t channels, spatial, batch;
};

BnLayout bn_layout(const Tensor& x) {
  if (x.shape.size() == 2) return {x.shape[1], 1, x.shape[0]};
  if (x.shape.size() == 4)
    return {x.shape[1], x.shape[2] * x.shape[3], x.shape[0]};
  throw std::invalid_argument("batch_norm: unsupported input rank");
}

double bn_value(const Tensor& x, const BnLayout& lo, std::size_t n,
                std::size_t c, std::size_t s) {
  return x.data[(n * lo.channels + c) * lo.spatial + s];
}

}  // namespace

Tensor forward(const Network& net, const Mask* mask, const Tensor& inputs,
               Mode mode, std::uint64_t dropout_seed, ForwardTrace* trace) {
  if (inputs.shape.empty() || inputs.shape.size() != net.input_shape.size() + 1)
    throw std::invalid_argument("forward: input rank mismatch, expected " +
                                shape_string(with_batch(0, net.input_shape)));
  for (std::size_t d = 0; d < net.input_shape.size(); ++d)
    if (inputs.shape[d + 1] != net.input_shape[d])
      throw std::invalid_argument("forward: input shape " +
                                  shape_string(inputs.shape) +
                                  " does not match network input " +
                                  shape_string(net.input_shape));
  if (!inputs.all_finite())
    throw std::invalid_argument("forward: non-finite input");
  if (mask != nullptr) check_mask_congruent(net, *mask);

  std::size_t batch = inputs.shape[0];
  std::size_t nl = net.layers.size();

  ForwardTrace local;
  ForwardTrace& tr = trace ? *trace : local;
  tr.input = inputs;
  tr.outputs.assign(nl, Tensor{});
  tr.dropout_keep.assign(nl, Tensor{});
  tr.bn.assign(nl, {});

  const Tensor* cur = &inputs;
  for (std::size_t i = 0; i < nl; ++i) {
    const LayerSpec& l = net.layers[i];
    Tensor y(with_batch(batch, net.out_shapes[i]));
    switch (l.kind) {
      case LayerKind::dense: {
        EffectiveWeight ew = effective_weight(net, mask, i);
        dense_forward(*cur, *ew.ptr, net.theta[i].bias, y);
        break;
      }
      case LayerKind::conv2d: {
        EffectiveWeight ew = effective_weight(net, mask, i);
        conv_forward(*cur, *ew.ptr, net.theta[i].bias, l, y);
        break;
      }
      case LayerKind::relu: {
        for (std::size_t k = 0; k < cur->data.size(); ++k)
          y.data[k] = cur->data[k] > 0.0 ? cur->data[k] : 0.0;
        break;
      }
      case LayerKind::batch_norm: {
        BnLayout lo = bn_layout(*cur);
        const LayerParams& lp = net.theta[i];
        Tensor mean({lo.channels}), var({lo.channels});
        if (mode == Mode::train) {
          double count = static_cast<double>(lo.batch * lo.spatial);
          for (std::size_t c = 0; c < lo.channels; ++c) {
            double sum = 0.0;
            for (std::size_t n = 0; n < lo.batch; ++n)
              for (std::size_t s = 0; s < lo.spatial; ++s)
                sum += bn_value(*cur, lo, n, c, s);
            mean[c] = sum / count;
            double sq = 0.0;
            for (std::size_t n = 0; n < lo.batch; ++n)
              for (std::size_t s = 0; s < lo.spatial; ++s) {
                double d = bn_value(*cur, lo, n, c, s) - mean[c];
                sq += d * d;
              }
            var[c] = sq / count;  // biased
          }
          tr.bn[i].mean = mean;
          tr.bn[i].var = var;
        } else {
          mean = lp.run_mean;
          var = lp.run_var;
        }
        for (std::size_t c = 0; c < lo.channels; ++c) {
          double inv = 1.0 / std::sqrt(var[c] + kBnEps);
          double g = lp.gamma[c], bb = lp.beta[c], m = mean[c];
          for (std::size_t n = 0; n < lo.batch; ++n)
            for (std::size_t s = 0; s < lo.spatial; ++s) {
              std::size_t idx = (n * lo.channels + c) * lo.spatial + s;
              y.data[idx] = g * (cur->data[idx] - m) * inv + bb;
            }
        }
        break;
      }
      case LayerKind::dropout: {
        if (mode == Mode::eval || l.rate == 0.0) {
          y.data = cur->data;
        } else {
          Rng rng(mix_seed(dropout_seed, i));
          Tensor keep(y.shape);
          double scale = 1.0 / (1.0 - l.rate);
          for (std::size_t k = 0; k < keep.data.size(); ++k)
            keep.data[k] = rng.uniform() >= l.rate ? scale : 0.0;
          for (std::size_t k = 0; k < y.data.size(); ++k)
            y.data[k] = cur->data[k] * keep.data[k];
          tr.dropout_keep[i] = std::move(keep);
        }
        break;
      }
      case LayerKind::flatten: {
        y.data = cur->data;
        break;
      }
      case LayerKind::avg_pool: {
        std::size_t c = cur->shape[1], h = cur->shape[2], w = cur->shape[3];
        std::size_t k = l.pool, oh = h / k, ow = w / k;
        double norm = 1.0 / static_cast<double>(k * k);
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t yo = 0; yo < oh; ++yo)
              for (std::size_t xo = 0; xo < ow; ++xo) {
                double acc = 0.0;
                for (std::size_t dy = 0; dy < k; ++dy)
                  for (std::size_t dx = 0; dx < k; ++dx)
                    acc += cur->data[((n * c + ch) * h + yo * k + dy) * w +
                                     xo * k + dx];
                y.data[((n * c + ch) * oh + yo) * ow + xo] = acc * norm;
              }
        break;
      }
      case LayerKind::residual_add: {
        const Tensor& skip = tr.outputs[l.skip_from];
        for (std::size_t k = 0; k < y.data.size(); ++k)
          y.data[k] = cur->data[k] + skip.data[k];
        break;
      }
    }
    tr.outputs[i] = std::move(y);
    cur = &tr.outputs[i];
  }
  return tr.outputs.back();
}

void absorb_batch_stats(Network& net, const ForwardTrace& trace,
                        double momentum) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].kind != LayerKind::batch_norm) continue;
    if (trace.bn[i].mean.empty()) continue;  // eval-mode trace
    LayerParams& lp = net.theta[i];
    for (std::size_t c = 0; c < lp.run_mean.numel(); ++c) {
      lp.run_mean[c] =
          (1.0 - momentum) * lp.run_mean[c] + momentum * trace.bn[i].mean[c];
      lp.run_var[c] =
          (1.0 - momentum) * lp.run_var[c] + momentum * trace.bn[i].var[c];
    }
  }
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.shape.size() != 2)
    throw std::invalid_argument("cross_entropy: logits must be (batch,classes)");
  std::size_t batch = logits.shape[0], classes = logits.shape[1];
  if (labels.size() != batch)
    throw std::invalid_argument("cross_entropy: label count mismatch");
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    int lab = labels[n];
    if (lab < 0 || static_cast<std::size_t>(lab) >= classes)
      throw std::invalid_argument("cross_entropy: label " +
                                  std::to_string(lab) + " out of range [0," +
                                  std::to_string(classes) + ")");
    const double* lp = logits.data.data() + n * classes;
    double mx = lp[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, lp[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(lp[c] - mx);
    total += std::log(sum) + mx - lp[lab];
  }
  return total / static_cast<double>(batch);
}

Gradients zero_gradients(const Network& net) {
  Gradients g(net.theta.size());
  for (std::size_t i = 0; i < net.theta.size(); ++i) {
    const LayerParams& lp = net.theta[i];
    if (!lp.weight.empty()) g[i].weight = Tensor(lp.weight.shape);
    if (!lp.bias.empty()) g[i].bias = Tensor(lp.bias.shape);
    if (!lp.gamma.empty()) g[i].gamma = Tensor(lp.gamma.shape);
    if (!lp.beta.empty()) g[i].beta = Tensor(lp.beta.shape);
    if (!lp.run_mean.empty()) g[i].run_mean = Tensor(lp.run_mean.shape);
    if (!lp.run_var.empty()) g[i].run_var = Tensor(lp.run_var.shape);
  }
  return g;
}

BackwardResult backward(const Network& net, const Mask* mask,
                        const Tensor& inputs, const std::vector<int>& labels,
                        Mode mode, std::uint64_t dropout_seed,
                        ForwardTrace* trace_out) {
  ForwardTrace local;
  ForwardTrace& tr = trace_out ? *trace_out : local;
  Tensor logits = forward(net, mask, inputs, mode, dropout_seed, &tr);

  BackwardResult res;
  res.loss = cross_entropy(logits, labels);
  res.grads = zero_gradients(net);

  std::size_t batch = inputs.shape[0];
  std::size_t classes = logits.shape[1];
  std::size_t nl = net.layers.size();

  // d(mean CE)/d(logits) = (softmax - onehot) / batch
  std::vector<Tensor> gout(nl);
  gout[nl - 1] = Tensor(logits.shape);
  for (std::size_t n = 0; n < batch; ++n) {
    const double* lp = logits.data.data() + n * classes;
    double* gp = gout[nl - 1].data.data() + n * classes;
    double mx = lp[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, lp[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(lp[c] - mx);
    for (std::size_t c = 0; c < classes; ++c)
      gp[c] = std::exp(lp[c] - mx) / sum / static_cast<double>(batch);
    gp[labels[n]] -= 1.0 / static_cast<double>(batch);
  }

  auto ensure = [&](std::size_t i) {
    if (gout[i].empty())
      gout[i] = Tensor(with_batch(batch, net.out_shapes[i]));
  };

  for (std::size_t ii = nl; ii-- > 0;) {
    if (gout[ii].empty()) continue;  // no gradient reached this layer
    const LayerSpec& l = net.layers[ii];
    const Tensor& g = gout[ii];
    const Tensor& x = (ii == 0) ? tr.input : tr.outputs[ii - 1];
    Tensor gin;

    switch (l.kind) {
      case LayerKind::dense: {
        EffectiveWeight ew = effective_weight(net, mask, ii);
        const Tensor& w = *ew.ptr;
        std::size_t in = l.in_features, out = l.out_features;
        Tensor& dw = res.grads[ii].weight;
        Tensor& db = res.grads[ii].bias;
        gin = Tensor(x.shape);
        for (std::size_t n = 0; n < batch; ++n) {
          const double* xp = x.data.data() + n * in;
          const double* gp = g.data.data() + n * out;
          double* gip = gin.data.data() + n * in;
          for (std::size_t o = 0; o < out; ++o) {
            double go = gp[o];
            db[o] += go;
            const double* wp = w.data.data() + o * in;
            double* dwp = dw.data.data() + o * in;
            for (std::size_t k = 0; k < in; ++k) {
              dwp[k] += go * xp[k];
              gip[k] += go * wp[k];
            }
          }
        }
        break;
      }
      case LayerKind::conv2d: {
        EffectiveWeight ew = effective_weight(net, mask, ii);
        const Tensor& w = *ew.ptr;
        std::size_t c_in = x.shape[1], h = x.shape[2], wdt = x.shape[3];
        std::size_t f = g.shape[1], oh = g.shape[2], ow = g.shape[3];
        std::size_t k = l.kernel, s = l.stride;
        long pad = static_cast<long>(l.padding);
        Tensor& dw = res.grads[ii].weight;
        Tensor& db = res.grads[ii].bias;
        gin = Tensor(x.shape);
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t fo = 0; fo < f; ++fo)
            for (std::size_t yo = 0; yo < oh; ++yo)
              for (std::size_t xo = 0; xo < ow; ++xo) {
                double go = g.data[((n * f + fo) * oh + yo) * ow + xo];
                db[fo] += go;
                for (std::size_t c = 0; c < c_in; ++c)
                  for (std::size_t kh = 0; kh < k; ++kh) {
                    long yi = static_cast<long>(yo * s + kh) - pad;
                    if (yi < 0 || yi >= static_cast<long>(h)) continue;
                    for (std::size_t kw = 0; kw < k; ++kw) {
                      long xi = static_cast<long>(xo * s + kw) - pad;
                      if (xi < 0 || xi >= static_cast<long>(wdt)) continue;
                      std::size_t xidx = ((n * c_in + c) * h + yi) * wdt + xi;
                      std::size_t widx = ((fo * c_in + c) * k + kh) * k + kw;
                      dw.data[widx] += go * x.data[xidx];
                      gin.data[xidx] += go * w.data[widx];
                    }
                  }
              }
        break;
      }
      case LayerKind::relu: {
        gin = Tensor(x.shape);
        for (std::size_t k = 0; k < x.data.size(); ++k)
          gin.data[k] = x.data[k] > 0.0 ? g.data[k] : 0.0;
        break;
      }
      case LayerKind::batch_norm: {
        BnLayout lo = bn_layout(x);
        const LayerParams& lp = net.theta[ii];
        const Tensor& mean =
            (mode == Mode::train) ? tr.bn[ii].mean : lp.run_mean;
        const Tensor& var = (mode == Mode::train) ? tr.bn[ii].var : lp.run_var;
        Tensor& dgamma = res.grads[ii].gamma;
        Tensor& dbeta = res.grads[ii].beta;
        gin = Tensor(x.shape);
        double count = static_cast<double>(lo.batch * lo.spatial);
        for (std::size_t c = 0; c < lo.channels; ++c) {
          double inv = 1.0 / std::sqrt(var[c] + kBnEps);
          double m = mean[c];
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t n = 0; n < lo.batch; ++n)
            for (std::size_t s = 0; s < lo.spatial; ++s) {
              std::size_t idx = (n * lo.channels + c) * lo.spatial + s;
              double xhat = (x.data[idx] - m) * inv;
              sum_g += g.data[idx];
              sum_gx += g.data[idx] * xhat;
            }
          dgamma[c] += sum_gx;
          dbeta[c] += sum_g;
          double ga = lp.gamma[c];
          if (mode == Mode::train) {
            // Batch statistics depend on x, so their gradient terms appear.
            for (std::size_t n = 0; n < lo.batch; ++n)
              for (std::size_t s = 0; s < lo.spatial; ++s) {
                std::size_t idx = (n * lo.channels + c) * lo.spatial + s;
                double xhat = (x.data[idx] - m) * inv;
                gin.data[idx] =
                    ga * inv *
                    (g.data[idx] - sum_g / count - xhat * sum_gx / count);
              }
          } else {
            for (std::size_t n = 0; n < lo.batch; ++n)
              for (std::size_t s = 0; s < lo.spatial; ++s) {
                std::size_t idx = (n * lo.channels + c) * lo.spatial + s;
                gin.data[idx] = g.data[idx] * ga * inv;
              }
          }
        }
        break;
      }
      case LayerKind::dropout: {
        if (tr.dropout_keep[ii].empty()) {
          gin = g;
        } else {
          const Tensor& keep = tr.dropout_keep[ii];
          gin = Tensor(x.shape);
          for (std::size_t k = 0; k < x.data.size(); ++k)
            gin.data[k] = g.data[k] * keep.data[k];
        }
        break;
      }
      case LayerKind::flatten: {
        gin = Tensor(x.shape);
        gin.data = g.data;
        break;
      }
      case LayerKind::avg_pool: {
        std::size_t c = x.shape[1], h = x.shape[2], w = x.shape[3];
        std::size_t k = l.pool, oh = h / k, ow = w / k;
        double norm = 1.0 / static_cast<double>(k * k);
        gin = Tensor(x.shape);
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t yo = 0; yo < oh; ++yo)
              for (std::size_t xo = 0; xo < ow; ++xo) {
                double go =
                    g.data[((n * c + ch) * oh + yo) * ow + xo] * norm;
                for (std::size_t dy = 0; dy < k; ++dy)
                  for (std::size_t dx = 0; dx < k; ++dx)
                    gin.data[((n * c + ch) * h + yo * k + dy) * w + xo * k +
                             dx] = go;
              }
        break;
      }
      case LayerKind::residual_add: {
        gin = g;
        ensure(l.skip_from);
        Tensor& gs = gout[l.skip_from];
        for (std::size_t k = 0; k < gs.data.size(); ++k)
          gs.data[k] += g.data[k];
        break;
      }
    }

    if (ii > 0) {
      ensure(ii - 1);
      Tensor& acc = gout[ii - 1];
      for (std::size_t k = 0; k < acc.data.size(); ++k)
        acc.data[k] += gin.data[k];
    }
  }

  // Masked-out weights carry no gradient.
  if (mask != nullptr) {
    for (std::size_t i = 0; i < nl; ++i) {
      const Tensor& m = mask->weights[i];
      if (m.empty()) continue;
      Tensor& dw = res.grads[i].weight;
      for (std::size_t k = 0; k < dw.data.size(); ++k) dw.data[k] *= m.data[k];
    }
  }
  return res;
}

}  // namespace lossland
