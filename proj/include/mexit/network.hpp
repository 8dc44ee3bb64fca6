#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mexit/layers.hpp"
#include "mexit/parameters.hpp"
#include "mexit/rng.hpp"
#include "mexit/tensor.hpp"

namespace mexit {

enum class Mode { train, eval };

/// A linear chain of layers f_1..f_L with its parameters. Activation h_0 is
/// the input, h_i the output of layer i.
struct Network {
  std::string name;
  Shape input_shape;
  std::vector<LayerSpec> layers;
  ParameterStore params;

  std::size_t depth() const { return layers.size(); }
  /// Per-sample shape of h_i for i in [0, depth()].
  Shape activation_shape(std::size_t i) const;
  Shape output_shape() const { return activation_shape(depth()); }
  bool ends_with_softmax() const { return !layers.empty() && layers.back().kind == LayerKind::softmax; }

  /// Parameter names use 1-based layer indices: "<name>.L3.weight".
  std::string parameter_name(std::size_t layer_index, std::string_view slot) const;
};

/// Fan-in scaled uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
/// Deterministic in (layers, input shape, seed).
ParameterStore init_parameters(const std::string& name, const Shape& input_shape,
                               const std::vector<LayerSpec>& layers, std::uint64_t seed);

Network make_network(std::string name, Shape input_shape, std::vector<LayerSpec> layers, std::uint64_t seed);

struct ActivationCache {
  std::vector<Tensor> activations;  // h_0..h_L
  std::vector<std::vector<double>> dropout_masks;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  Mode mode = Mode::eval;
  std::uint64_t params_version = 0;
  std::size_t layer_count = 0;

  const Tensor& output() const { return activations.back(); }
};

/// Runs layers 1..upto (all by default) on a batch. Train mode needs `rng`
/// when the chain contains dropout.
ActivationCache forward(const Network& net, const Tensor& input, Mode mode, Rng* rng = nullptr);
ActivationCache forward(const Network& net, const Tensor& input, Mode mode, Rng* rng, std::size_t upto);

/// Continues a partial forward pass from its last cached layer up to `upto`.
void extend_forward(const Network& net, ActivationCache& cache, std::size_t upto, Rng* rng = nullptr);

struct BackwardResult {
  Gradients gradients;   // one entry per unfrozen parameter of layers 1..from_layer
  Tensor input_gradient; // dLoss/dh_0, only when requested
};

/// Backpropagates `upstream` = dLoss/dh_{from_layer} through layers
/// from_layer..1. Frozen parameters get no gradient entry.
BackwardResult backward(const Network& net, const ActivationCache& cache, const Tensor& upstream,
                        std::size_t from_layer, bool want_input_gradient = false);
BackwardResult backward(const Network& net, const ActivationCache& cache, const Tensor& upstream);

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> logit_gradient;  // p - onehot(label)
};

/// -ln(p_label) for one probability vector, with the fused softmax+CE
/// gradient with respect to the logits.
CrossEntropy cross_entropy_loss(std::span<const double> probabilities, std::size_t label);

struct BatchLoss {
  double mean_loss = 0.0;
  std::vector<double> per_sample;
  Tensor logit_gradient;  // (p - onehot) / batch, shaped like the logits
};

/// Mean cross-entropy of a softmax-terminated network's batch output,
/// computed from the logits h_{L-1} for stability.
BatchLoss softmax_cross_entropy(const Network& net, const ActivationCache& cache,
                                std::span<const std::size_t> labels);

std::vector<double> softmax(std::span<const double> logits);

std::size_t argmax(std::span<const double> values);

/// Eval-mode predictions (argmax of the output), batched.
std::vector<std::size_t> predict(const Network& net, const Tensor& inputs, std::size_t batch_size = 256);

}  // namespace mexit
