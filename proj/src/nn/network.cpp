#include "mexit/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mexit/error.hpp"

namespace mexit {

namespace {

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t filters, out_height, out_width;
  std::size_t kernel, stride;
  long pad;
};

ConvGeometry conv_geometry(const LayerSpec& l, const Shape& in, const Shape& out) {
  return {in[0], in[1], in[2], out[0], out[1], out[2], l.kernel, l.stride,
          l.padding == Padding::same ? static_cast<long>((l.kernel - 1) / 2) : 0L};
}

// Output columns ox for which ix = ox*stride + k - pad lands inside [0, extent).
std::pair<long, long> valid_range(long k, long pad, long stride, long extent, long out_extent) {
  const long offset = k - pad;
  long lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  long hi = (extent - 1 - offset) >= 0 ? (extent - 1 - offset) / stride + 1 : 0;
  return {std::min(lo, out_extent), std::clamp(hi, 0L, out_extent)};
}

void conv_forward(const ConvGeometry& g, const double* in, const double* w, const double* b, double* out) {
  const std::size_t plane = g.out_height * g.out_width;
  const long s = static_cast<long>(g.stride);
  for (std::size_t f = 0; f < g.filters; ++f) {
    double* o = out + f * plane;
    std::fill(o, o + plane, b[f]);
    for (std::size_t c = 0; c < g.channels; ++c) {
      const double* x = in + c * g.height * g.width;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        auto [oy0, oy1] = valid_range(static_cast<long>(ky), g.pad, s, static_cast<long>(g.height),
                                      static_cast<long>(g.out_height));
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          const double wv = w[((f * g.channels + c) * g.kernel + ky) * g.kernel + kx];
          auto [ox0, ox1] = valid_range(static_cast<long>(kx), g.pad, s, static_cast<long>(g.width),
                                        static_cast<long>(g.out_width));
          for (long oy = oy0; oy < oy1; ++oy) {
            const long iy = oy * s + static_cast<long>(ky) - g.pad;
            const double* xrow = x + iy * static_cast<long>(g.width);
            double* orow = o + oy * static_cast<long>(g.out_width);
            const long ixoff = static_cast<long>(kx) - g.pad;
            if (s == 1) {
              for (long ox = ox0; ox < ox1; ++ox) orow[ox] += wv * xrow[ox + ixoff];
            } else {
              for (long ox = ox0; ox < ox1; ++ox) orow[ox] += wv * xrow[ox * s + ixoff];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const ConvGeometry& g, const double* in, const double* w, const double* gout, double* gw,
                   double* gb, double* gin) {
  const std::size_t plane = g.out_height * g.out_width;
  const long s = static_cast<long>(g.stride);
  for (std::size_t f = 0; f < g.filters; ++f) {
    const double* go = gout + f * plane;
    if (gb) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += go[i];
      gb[f] += acc;
    }
    for (std::size_t c = 0; c < g.channels; ++c) {
      const double* x = in + c * g.height * g.width;
      double* gx = gin ? gin + c * g.height * g.width : nullptr;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        auto [oy0, oy1] = valid_range(static_cast<long>(ky), g.pad, s, static_cast<long>(g.height),
                                      static_cast<long>(g.out_height));
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          const std::size_t widx = ((f * g.channels + c) * g.kernel + ky) * g.kernel + kx;
          const double wv = w[widx];
          auto [ox0, ox1] = valid_range(static_cast<long>(kx), g.pad, s, static_cast<long>(g.width),
                                        static_cast<long>(g.out_width));
          const long ixoff = static_cast<long>(kx) - g.pad;
          double acc = 0.0;
          for (long oy = oy0; oy < oy1; ++oy) {
            const long iy = oy * s + static_cast<long>(ky) - g.pad;
            const double* xrow = x + iy * static_cast<long>(g.width);
            const double* grow = go + oy * static_cast<long>(g.out_width);
            for (long ox = ox0; ox < ox1; ++ox) acc += grow[ox] * xrow[ox * s + ixoff];
            if (gx) {
              double* gxrow = gx + iy * static_cast<long>(g.width);
              for (long ox = ox0; ox < ox1; ++ox) gxrow[ox * s + ixoff] += wv * grow[ox];
            }
          }
          if (gw) gw[widx] += acc;
        }
      }
    }
  }
}

void check_input(const Network& net, const Tensor& input) {
  if (input.rank() == 0) throw ShapeError("network '" + net.name + "': input has no batch dimension");
  if (input.sample_shape() != net.input_shape) {
    throw ShapeError("network '" + net.name + "' layer 1 (" +
                     (net.layers.empty() ? std::string("none") : describe(net.layers.front())) +
                     "): expected input " + shape_to_string(net.input_shape) + ", got " +
                     shape_to_string(input.sample_shape()));
  }
}

}  // namespace

Shape Network::activation_shape(std::size_t i) const {
  if (i > layers.size()) throw InvalidArgument("activation index " + std::to_string(i) + " past depth");
  Shape s = input_shape;
  for (std::size_t k = 0; k < i; ++k) s = mexit::output_shape(layers[k], s);
  return s;
}

std::string Network::parameter_name(std::size_t layer_index, std::string_view slot) const {
  return name + ".L" + std::to_string(layer_index) + "." + std::string(slot);
}

ParameterStore init_parameters(const std::string& name, const Shape& input_shape,
                               const std::vector<LayerSpec>& layers, std::uint64_t seed) {
  ParameterStore store;
  Rng rng(seed);
  Shape s = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Shape out;
    try {
      out = output_shape(layers[i], s);
    } catch (const ShapeError& e) {
      throw ShapeError("network '" + name + "' layer " + std::to_string(i + 1) + ": " + e.what());
    }
    if (layers[i].has_parameters()) {
      auto [wshape, bshape] = parameter_shapes(layers[i], s);
      const std::size_t fan_in = shape_size(wshape) / wshape[0];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      Tensor w(wshape);
      for (double& v : w.data()) v = rng.uniform(-bound, bound);
      store.add(name + ".L" + std::to_string(i + 1) + ".weight", std::move(w));
      store.add(name + ".L" + std::to_string(i + 1) + ".bias", Tensor(bshape));
    }
    s = std::move(out);
  }
  return store;
}

Network make_network(std::string name, Shape input_shape, std::vector<LayerSpec> layers, std::uint64_t seed) {
  Network net{std::move(name), std::move(input_shape), std::move(layers), {}};
  net.params = init_parameters(net.name, net.input_shape, net.layers, seed);
  return net;
}

ActivationCache forward(const Network& net, const Tensor& input, Mode mode, Rng* rng) {
  return forward(net, input, mode, rng, net.depth());
}

ActivationCache forward(const Network& net, const Tensor& input, Mode mode, Rng* rng, std::size_t upto) {
  check_input(net, input);
  if (upto > net.depth()) throw InvalidArgument("forward: upto past network depth");
  ActivationCache cache;
  cache.mode = mode;
  cache.params_version = net.params.version();
  cache.layer_count = 0;
  cache.activations.push_back(input);
  extend_forward(net, cache, upto, rng);
  return cache;
}

void extend_forward(const Network& net, ActivationCache& cache, std::size_t upto, Rng* rng) {
  if (upto > net.depth()) throw InvalidArgument("forward: upto past network depth");
  if (cache.params_version != net.params.version() || cache.activations.size() != cache.layer_count + 1) {
    throw ContractViolation("network '" + net.name + "': cannot extend a stale activation cache");
  }
  const Mode mode = cache.mode;
  const std::size_t batch = cache.activations.front().dim(0);
  const std::size_t first = cache.layer_count;
  cache.activations.reserve(upto + 1);
  cache.dropout_masks.resize(std::max(cache.dropout_masks.size(), upto));
  cache.pool_argmax.resize(std::max(cache.pool_argmax.size(), upto));

  Shape in_shape = net.activation_shape(first);
  for (std::size_t i = first; i < upto; ++i) {
    const LayerSpec& l = net.layers[i];
    Shape out_shape;
    try {
      out_shape = output_shape(l, in_shape);
    } catch (const ShapeError& e) {
      throw ShapeError("network '" + net.name + "' layer " + std::to_string(i + 1) + ": " + e.what());
    }
    const Tensor& x = cache.activations.back();
    Tensor y(batched(batch, out_shape));
    const std::size_t in_n = shape_size(in_shape), out_n = shape_size(out_shape);

    switch (l.kind) {
      case LayerKind::dense: {
        const Tensor& w = net.params.value(net.parameter_name(i + 1, "weight"));
        const Tensor& b = net.params.value(net.parameter_name(i + 1, "bias"));
        for (std::size_t s = 0; s < batch; ++s) {
          const double* xs = x.data().data() + s * in_n;
          double* ys = y.data().data() + s * out_n;
          for (std::size_t u = 0; u < out_n; ++u) {
            const double* wr = w.data().data() + u * in_n;
            double acc = b[u];
            for (std::size_t d = 0; d < in_n; ++d) acc += wr[d] * xs[d];
            ys[u] = acc;
          }
        }
        break;
      }
      case LayerKind::conv2d: {
        const Tensor& w = net.params.value(net.parameter_name(i + 1, "weight"));
        const Tensor& b = net.params.value(net.parameter_name(i + 1, "bias"));
        const ConvGeometry g = conv_geometry(l, in_shape, out_shape);
        for (std::size_t s = 0; s < batch; ++s)
          conv_forward(g, x.data().data() + s * in_n, w.data().data(), b.data().data(), y.data().data() + s * out_n);
        break;
      }
      case LayerKind::maxpool2d: {
        auto& arg = cache.pool_argmax[i];
        arg.resize(batch * out_n);
        const std::size_t C = in_shape[0], H = in_shape[1], W = in_shape[2];
        const std::size_t Ho = out_shape[1], Wo = out_shape[2];
        for (std::size_t s = 0; s < batch; ++s) {
          const double* xs = x.data().data() + s * in_n;
          double* ys = y.data().data() + s * out_n;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oy = 0; oy < Ho; ++oy)
              for (std::size_t ox = 0; ox < Wo; ++ox) {
                std::size_t best = c * H * W + (oy * l.stride) * W + ox * l.stride;
                for (std::size_t ky = 0; ky < l.kernel; ++ky)
                  for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                    const std::size_t idx = c * H * W + (oy * l.stride + ky) * W + (ox * l.stride + kx);
                    if (xs[idx] > xs[best]) best = idx;
                  }
                const std::size_t o = (c * Ho + oy) * Wo + ox;
                ys[o] = xs[best];
                arg[s * out_n + o] = static_cast<std::uint32_t>(best);
              }
        }
        break;
      }
      case LayerKind::relu:
        for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] > 0.0 ? x[k] : 0.0;
        break;
      case LayerKind::flatten:
        std::copy(x.data().begin(), x.data().end(), y.data().begin());
        break;
      case LayerKind::dropout:
        if (mode == Mode::train && l.rate > 0.0) {
          if (!rng) throw InvalidArgument("network '" + net.name + "': train-mode dropout needs an rng");
          auto& mask = cache.dropout_masks[i];
          mask.resize(x.size());
          const double keep_scale = 1.0 / (1.0 - l.rate);
          for (std::size_t k = 0; k < x.size(); ++k) {
            mask[k] = rng->uniform() < l.rate ? 0.0 : keep_scale;
            y[k] = x[k] * mask[k];
          }
        } else {
          std::copy(x.data().begin(), x.data().end(), y.data().begin());
        }
        break;
      case LayerKind::softmax:
        for (std::size_t s = 0; s < batch; ++s) {
          auto p = softmax(x.sample(s));
          std::copy(p.begin(), p.end(), y.sample(s).begin());
        }
        break;
    }
    cache.activations.push_back(std::move(y));
    cache.layer_count = i + 1;
    in_shape = std::move(out_shape);
  }
}

BackwardResult backward(const Network& net, const ActivationCache& cache, const Tensor& upstream) {
  return backward(net, cache, upstream, net.depth(), false);
}

BackwardResult backward(const Network& net, const ActivationCache& cache, const Tensor& upstream,
                        std::size_t from_layer, bool want_input_gradient) {
  if (cache.params_version != net.params.version() || cache.layer_count > net.depth() ||
      cache.activations.size() != cache.layer_count + 1) {
    throw ContractViolation("network '" + net.name + "': activation cache is stale (parameters changed since forward)");
  }
  if (from_layer > cache.layer_count) throw InvalidArgument("backward: from_layer past cached depth");
  if (upstream.shape() != cache.activations[from_layer].shape()) {
    throw ShapeError("backward: upstream gradient " + shape_to_string(upstream.shape()) + " does not match h_" +
                     std::to_string(from_layer) + " " + shape_to_string(cache.activations[from_layer].shape()));
  }

  BackwardResult result;
  // Lowest layer that still needs a gradient w.r.t. its input.
  std::size_t lowest_needed = 0;
  if (!want_input_gradient) {
    lowest_needed = from_layer;
    for (std::size_t i = 0; i < from_layer; ++i) {
      const LayerSpec& l = net.layers[i];
      if (l.has_parameters() && (!net.params.frozen(net.parameter_name(i + 1, "weight")) ||
                                 !net.params.frozen(net.parameter_name(i + 1, "bias")))) {
        lowest_needed = i;
        break;
      }
    }
  }

  const std::size_t batch = upstream.dim(0);
  Tensor grad = upstream;
  for (std::size_t i = from_layer; i-- > lowest_needed;) {
    const LayerSpec& l = net.layers[i];
    const Tensor& x = cache.activations[i];
    const Tensor& y = cache.activations[i + 1];
    const std::size_t in_n = x.sample_size(), out_n = y.sample_size();
    const bool need_input_grad = i > lowest_needed || want_input_gradient;
    Tensor gin(x.shape());

    switch (l.kind) {
      case LayerKind::dense: {
        const std::string wname = net.parameter_name(i + 1, "weight");
        const std::string bname = net.parameter_name(i + 1, "bias");
        const Tensor& w = net.params.value(wname);
        const bool train_w = !net.params.frozen(wname), train_b = !net.params.frozen(bname);
        Tensor gw(w.shape()), gb(Shape{out_n});
        for (std::size_t s = 0; s < batch; ++s) {
          const double* xs = x.data().data() + s * in_n;
          const double* gs = grad.data().data() + s * out_n;
          double* gi = gin.data().data() + s * in_n;
          for (std::size_t u = 0; u < out_n; ++u) {
            const double gu = gs[u];
            if (gu == 0.0) continue;
            gb[u] += gu;
            if (train_w) {
              double* gwr = gw.data().data() + u * in_n;
              for (std::size_t d = 0; d < in_n; ++d) gwr[d] += gu * xs[d];
            }
            if (need_input_grad) {
              const double* wr = w.data().data() + u * in_n;
              for (std::size_t d = 0; d < in_n; ++d) gi[d] += gu * wr[d];
            }
          }
        }
        if (train_w) result.gradients.emplace(wname, std::move(gw));
        if (train_b) result.gradients.emplace(bname, std::move(gb));
        break;
      }
      case LayerKind::conv2d: {
        const std::string wname = net.parameter_name(i + 1, "weight");
        const std::string bname = net.parameter_name(i + 1, "bias");
        const Tensor& w = net.params.value(wname);
        const bool train_w = !net.params.frozen(wname), train_b = !net.params.frozen(bname);
        Tensor gw(w.shape()), gb(Shape{w.dim(0)});
        const ConvGeometry g = conv_geometry(l, x.sample_shape(), y.sample_shape());
        for (std::size_t s = 0; s < batch; ++s)
          conv_backward(g, x.data().data() + s * in_n, w.data().data(), grad.data().data() + s * out_n,
                        train_w ? gw.data().data() : nullptr, train_b ? gb.data().data() : nullptr,
                        need_input_grad ? gin.data().data() + s * in_n : nullptr);
        if (train_w) result.gradients.emplace(wname, std::move(gw));
        if (train_b) result.gradients.emplace(bname, std::move(gb));
        break;
      }
      case LayerKind::maxpool2d: {
        const auto& arg = cache.pool_argmax[i];
        for (std::size_t s = 0; s < batch; ++s)
          for (std::size_t o = 0; o < out_n; ++o) gin[s * in_n + arg[s * out_n + o]] += grad[s * out_n + o];
        break;
      }
      case LayerKind::relu:
        for (std::size_t k = 0; k < x.size(); ++k) gin[k] = x[k] > 0.0 ? grad[k] : 0.0;
        break;
      case LayerKind::flatten:
        std::copy(grad.data().begin(), grad.data().end(), gin.data().begin());
        break;
      case LayerKind::dropout: {
        const auto& mask = cache.dropout_masks[i];
        if (mask.empty()) {
          std::copy(grad.data().begin(), grad.data().end(), gin.data().begin());
        } else {
          for (std::size_t k = 0; k < x.size(); ++k) gin[k] = grad[k] * mask[k];
        }
        break;
      }
      case LayerKind::softmax:
        for (std::size_t s = 0; s < batch; ++s) {
          const double* p = y.data().data() + s * out_n;
          const double* gs = grad.data().data() + s * out_n;
          double dot = 0.0;
          for (std::size_t k = 0; k < out_n; ++k) dot += gs[k] * p[k];
          for (std::size_t k = 0; k < out_n; ++k) gin[s * in_n + k] = p[k] * (gs[k] - dot);
        }
        break;
    }
    grad = std::move(gin);
  }
  if (want_input_gradient) result.input_gradient = std::move(grad);
  return result;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += (p[k] = std::exp(logits[k] - m));
  for (double& v : p) v /= z;
  return p;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

CrossEntropy cross_entropy_loss(std::span<const double> probabilities, std::size_t label) {
  if (label >= probabilities.size()) {
    throw InvalidArgument("label " + std::to_string(label) + " out of range for " +
                          std::to_string(probabilities.size()) + " classes");
  }
  double total = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0)) throw InvalidArgument("cross_entropy_loss: negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("cross_entropy_loss: probabilities do not sum to 1");
  CrossEntropy ce;
  ce.loss = -std::log(std::max(probabilities[label], std::numeric_limits<double>::min()));
  ce.logit_gradient.assign(probabilities.begin(), probabilities.end());
  ce.logit_gradient[label] -= 1.0;
  return ce;
}

BatchLoss softmax_cross_entropy(const Network& net, const ActivationCache& cache,
                                std::span<const std::size_t> labels) {
  if (!net.ends_with_softmax() || cache.layer_count != net.depth()) {
    throw InvalidArgument("softmax_cross_entropy: network '" + net.name + "' must end with softmax and be fully run");
  }
  const Tensor& logits = cache.activations[net.depth() - 1];
  const Tensor& probs = cache.output();
  const std::size_t batch = logits.dim(0), classes = logits.sample_size();
  if (labels.size() != batch) throw InvalidArgument("softmax_cross_entropy: label count does not match batch");

  BatchLoss out;
  out.per_sample.resize(batch);
  out.logit_gradient = Tensor(logits.shape());
  const double inv = 1.0 / static_cast<double>(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    const std::size_t y = labels[s];
    if (y >= classes) {
      throw InvalidArgument("label " + std::to_string(y) + " out of range for " + std::to_string(classes) + " classes");
    }
    auto z = logits.sample(s);
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    out.per_sample[s] = std::log(sum) + m - z[y];
    out.mean_loss += out.per_sample[s];
    auto p = probs.sample(s);
    for (std::size_t k = 0; k < classes; ++k)
      out.logit_gradient[s * classes + k] = (p[k] - (k == y ? 1.0 : 0.0)) * inv;
  }
  out.mean_loss *= inv;
  return out;
}

std::vector<std::size_t> predict(const Network& net, const Tensor& inputs, std::size_t batch_size) {
  const std::size_t n = inputs.dim(0);
  std::vector<std::size_t> out;
  out.reserve(n);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    rows.clear();
    for (std::size_t r = start; r < std::min(n, start + batch_size); ++r) rows.push_back(r);
    auto cache = forward(net, gather_rows(inputs, rows), Mode::eval);
    const Tensor& y = cache.output();
    for (std::size_t s = 0; s < rows.size(); ++s) out.push_back(argmax(y.sample(s)));
  }
  return out;
}

}  // namespace mexit
