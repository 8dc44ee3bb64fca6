#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>

#include "mexit/parameters.hpp"

namespace mexit {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view name);

/// Reduce-on-plateau policy, monitoring validation accuracy.
struct PlateauPolicy {
  bool enabled = true;
  double factor = 0.5;
  std::size_t patience = 3;
  double min_delta = 1e-4;
  double min_lr = 1e-6;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  PlateauPolicy plateau;

  void validate() const;
};

/// One update of every parameter named in `gradients` at learning rate `lr`.
/// SGD: theta -= lr * g. Adam: bias-corrected moments,
/// theta -= lr * m_hat / (sqrt(v_hat) + eps).
/// Throws ContractViolation for a gradient on a frozen or unknown parameter.
void optimizer_step(ParameterStore& store, const Gradients& gradients, const OptimizerConfig& config, double lr);
void optimizer_step(ParameterStore& store, const Gradients& gradients, const OptimizerConfig& config);

/// Tracks the best validation accuracy and cuts the learning rate when it has
/// not improved by more than min_delta for `patience` epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, PlateauPolicy policy);

  /// Feed the accuracy of one completed epoch; returns the learning rate to
  /// use for the next epoch.
  double step(double validation_accuracy);

  double learning_rate() const { return lr_; }
  std::size_t reductions() const { return reductions_; }
  std::size_t epochs_without_improvement() const { return wait_; }
  double best() const { return best_; }

 private:
  double initial_lr_;
  PlateauPolicy policy_;
  double lr_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t wait_ = 0;
  std::size_t reductions_ = 0;
};

/// Replays a whole accuracy history through a fresh scheduler.
double plateau_learning_rate(std::span<const double> history, double initial_lr, const PlateauPolicy& policy);

}  // namespace mexit
