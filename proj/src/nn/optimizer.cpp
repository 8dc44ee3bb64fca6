#include "mexit/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mexit/error.hpp"

namespace mexit {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("adam betas must be in [0,1)");
  if (!(epsilon > 0.0)) throw InvalidArgument("adam epsilon must be positive");
  if (!(plateau.factor > 0.0 && plateau.factor < 1.0)) throw InvalidArgument("plateau factor must be in (0,1)");
  if (!(plateau.min_lr >= 0.0)) throw InvalidArgument("plateau min_lr must be nonnegative");
}

void optimizer_step(ParameterStore& store, const Gradients& gradients, const OptimizerConfig& config) {
  optimizer_step(store, gradients, config, config.learning_rate);
}

void optimizer_step(ParameterStore& store, const Gradients& gradients, const OptimizerConfig& config, double lr) {
  for (const auto& [name, g] : gradients) {
    if (!store.contains(name)) throw ContractViolation("gradient for unknown parameter '" + name + "'");
    if (store.frozen(name)) throw ContractViolation("gradient for frozen parameter '" + name + "'");
    if (g.shape() != store.value(name).shape()) throw ShapeError("gradient shape mismatch for '" + name + "'");
  }
  const std::uint64_t t = store.advance_optimizer_step();
  if (config.kind == OptimizerKind::sgd) {
    for (const auto& [name, g] : gradients) {
      auto theta = store.mutable_value(name).data();
      for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= lr * g[k];
    }
    return;
  }
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (const auto& [name, g] : gradients) {
    Parameter& p = store.mutable_parameter(name);
    if (p.first_moment.shape() != p.value.shape()) {
      p.first_moment = Tensor(p.value.shape());
      p.second_moment = Tensor(p.value.shape());
    }
    auto theta = p.value.data();
    auto m = p.first_moment.data();
    auto v = p.second_moment.data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      theta[k] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

PlateauScheduler::PlateauScheduler(double initial_lr, PlateauPolicy policy)
    : initial_lr_(initial_lr), policy_(policy), lr_(initial_lr) {}

double PlateauScheduler::step(double accuracy) {
  if (!policy_.enabled) return lr_;
  if (accuracy > best_ + policy_.min_delta) {
    best_ = accuracy;
    wait_ = 0;
    return lr_;
  }
  if (++wait_ >= policy_.patience) {
    wait_ = 0;
    if (lr_ > policy_.min_lr) {
      ++reductions_;
      lr_ = std::max(initial_lr_ * std::pow(policy_.factor, static_cast<double>(reductions_)), policy_.min_lr);
    }
  }
  return lr_;
}

double plateau_learning_rate(std::span<const double> history, double initial_lr, const PlateauPolicy& policy) {
  PlateauScheduler s(initial_lr, policy);
  for (double a : history) s.step(a);
  return s.learning_rate();
}

}  // namespace mexit
