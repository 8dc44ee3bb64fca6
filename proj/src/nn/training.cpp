#include "mexit/training.hpp"

#include <cmath>

#include "mexit/error.hpp"

namespace mexit {

FitReport fit(Network& net, const BatchInputs& inputs, std::span<const std::size_t> labels, BatchStream& stream,
              const FitOptions& options, const Validator& validate) {
  options.optimizer.validate();
  FitReport report;
  if (options.epochs == 0) return report;

  Rng dropout_rng(options.dropout_seed);
  PlateauScheduler plateau(options.optimizer.learning_rate, options.optimizer.plateau);
  double lr = options.optimizer.learning_rate;
  double best = -1.0;
  std::size_t stale_epochs = 0;
  std::vector<std::size_t> batch_labels;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < stream.batches_per_epoch(); ++b) {
      auto batch = stream.next();
      if (!batch) throw ContractViolation("batch stream ended before the requested number of epochs");
      batch_labels.clear();
      for (std::size_t idx : *batch) {
        if (idx >= labels.size()) throw InvalidArgument("batch index " + std::to_string(idx) + " out of range");
        batch_labels.push_back(labels[idx]);
      }
      auto cache = forward(net, inputs(*batch), Mode::train, &dropout_rng);
      auto loss = softmax_cross_entropy(net, cache, batch_labels);
      auto grads = backward(net, cache, loss.logit_gradient, net.depth() - 1, false);
      if (options.gradient_guard) options.gradient_guard(grads.gradients);
      optimizer_step(net.params, grads.gradients, options.optimizer, lr);
      loss_sum += loss.mean_loss;
      ++batches;
    }
    EpochMetrics m;
    m.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    m.learning_rate = lr;
    m.validation_accuracy = validate ? validate(net) : std::nan("");
    report.epochs.push_back(m);
    if (validate) {
      lr = plateau.step(m.validation_accuracy);
      if (options.early_stopping_patience > 0) {
        if (m.validation_accuracy > best + options.optimizer.plateau.min_delta) {
          best = m.validation_accuracy;
          stale_epochs = 0;
        } else if (++stale_epochs >= options.early_stopping_patience) {
          report.stopped_early = true;
          break;
        }
      }
    }
  }
  return report;
}

double accuracy(const Network& net, const Tensor& inputs, std::span<const std::size_t> labels) {
  if (labels.empty()) throw InvalidArgument("accuracy of an empty dataset");
  auto pred = predict(net, inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace mexit
