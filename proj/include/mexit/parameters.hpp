#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mexit/tensor.hpp"

namespace mexit {

struct Parameter {
  Tensor value;
  bool frozen = false;
  // Optimizer slots, allocated on the first Adam step.
  Tensor first_moment;
  Tensor second_moment;
};

using Gradients = std::map<std::string, Tensor>;

/// Named parameter tensors of a network. Iteration order is the name order,
/// which keeps every traversal (init, serialization, updates) deterministic.
///
/// `version()` increases on every mutation so activation caches taken before
/// an update can be detected as stale.
class ParameterStore {
 public:
  using Map = std::map<std::string, Parameter>;

  void add(const std::string& name, Tensor value, bool frozen = false);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Parameter& at(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return at(name).value; }
  bool frozen(const std::string& name) const { return at(name).frozen; }

  /// Mutable access to the values. Bumps the version.
  Tensor& mutable_value(const std::string& name);
  Parameter& mutable_parameter(const std::string& name);

  void set_frozen(const std::string& name, bool frozen);
  void freeze_all();
  bool all_frozen() const;

  std::size_t size() const { return params_.size(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  std::uint64_t version() const { return version_; }
  std::uint64_t optimizer_step() const { return step_; }
  void set_optimizer_step(std::uint64_t step) { step_ = step; }
  std::uint64_t advance_optimizer_step() {
    ++version_;
    return ++step_;
  }

  /// Bitwise comparison of names, frozen flags and values.
  bool same_values(const ParameterStore& other) const;

 private:
  Map params_;
  std::uint64_t version_ = 0;
  std::uint64_t step_ = 0;
};

}  // namespace mexit
