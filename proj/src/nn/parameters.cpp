#include "mexit/parameters.hpp"

#include <cstring>

#include "mexit/error.hpp"

namespace mexit {

void ParameterStore::add(const std::string& name, Tensor value, bool frozen) {
  if (contains(name)) throw InvalidArgument("duplicate parameter '" + name + "'");
  params_.emplace(name, Parameter{std::move(value), frozen, {}, {}});
  ++version_;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

Parameter& ParameterStore::mutable_parameter(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  ++version_;
  return it->second;
}

Tensor& ParameterStore::mutable_value(const std::string& name) { return mutable_parameter(name).value; }

void ParameterStore::set_frozen(const std::string& name, bool frozen) { mutable_parameter(name).frozen = frozen; }

void ParameterStore::freeze_all() {
  for (auto& [name, p] : params_) p.frozen = true;
  ++version_;
}

bool ParameterStore::all_frozen() const {
  for (const auto& [name, p] : params_)
    if (!p.frozen) return false;
  return true;
}

bool ParameterStore::same_values(const ParameterStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.frozen != b->second.frozen) return false;
    const Tensor& x = a->second.value;
    const Tensor& y = b->second.value;
    if (x.shape() != y.shape()) return false;
    if (std::memcmp(x.data().data(), y.data().data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace mexit
