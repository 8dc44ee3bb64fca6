#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mexit/network.hpp"
#include "mexit/optimizer.hpp"

namespace mexit {

/// Source of mini-batches, as lists of sample indices into the training set.
class BatchStream {
 public:
  virtual ~BatchStream() = default;
  /// Next batch, or nullopt once the stream is exhausted.
  virtual std::optional<std::vector<std::size_t>> next() = 0;
  virtual std::size_t batches_per_epoch() const = 0;
};

/// Builds the input tensor for a list of training-sample indices.
using BatchInputs = std::function<Tensor(std::span<const std::size_t>)>;
/// Returns the validation accuracy of the network in its current state.
using Validator = std::function<double(const Network&)>;
/// Called with each gradient set before it is applied; may throw.
using GradientGuard = std::function<void(const Gradients&)>;

struct FitOptions {
  OptimizerConfig optimizer;
  std::size_t epochs = 0;
  std::uint64_t dropout_seed = 0;
  /// Stop after this many epochs without validation improvement; 0 disables.
  std::size_t early_stopping_patience = 0;
  GradientGuard gradient_guard;
};

struct EpochMetrics {
  double train_loss = 0.0;
  double validation_accuracy = 0.0;
  double learning_rate = 0.0;
};

struct FitReport {
  std::vector<EpochMetrics> epochs;
  bool stopped_early = false;
};

/// Mini-batch training of a softmax-terminated network with mean
/// cross-entropy. Reads `batches_per_epoch()` batches per epoch from `stream`.
FitReport fit(Network& net, const BatchInputs& inputs, std::span<const std::size_t> labels, BatchStream& stream,
              const FitOptions& options, const Validator& validate = {});

/// Fraction of samples whose eval-mode argmax matches the label.
double accuracy(const Network& net, const Tensor& inputs, std::span<const std::size_t> labels);

}  // namespace mexit
