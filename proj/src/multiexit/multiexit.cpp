#include "mexit/multiexit.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "mexit/checkpoint.hpp"
#include "mexit/error.hpp"

namespace mexit {

namespace {

constexpr std::array<unsigned char, 8> kModelMagic{'M', 'E', 'X', 'T', 'M', 'E', 'M', '\0'};

std::vector<std::size_t> iota_rows(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> rows;
  rows.reserve(end - begin);
  for (std::size_t r = begin; r < end; ++r) rows.push_back(r);
  return rows;
}

double accuracy_on_taps(const Network& branch, const Tensor& taps, std::span<const std::size_t> labels) {
  return accuracy(branch, taps, labels);
}

}  // namespace

std::vector<LayerSpec> BranchSpec::layers(std::size_t classes) const {
  std::vector<LayerSpec> l;
  l.push_back(LayerSpec::conv2d(conv_filters, conv_kernel));
  if (hidden_relu) l.push_back(LayerSpec::relu());
  l.push_back(LayerSpec::maxpool2d(pool, pool));
  l.push_back(LayerSpec::flatten());
  l.push_back(LayerSpec::dense(dense1));
  if (hidden_relu) l.push_back(LayerSpec::relu());
  l.push_back(LayerSpec::dropout(dropout));
  l.push_back(LayerSpec::dense(dense2));
  if (hidden_relu) l.push_back(LayerSpec::relu());
  l.push_back(LayerSpec::dropout(dropout));
  l.push_back(LayerSpec::dense(classes));
  l.push_back(LayerSpec::softmax());
  return l;
}

std::vector<std::size_t> MultiExitModel::locations() const {
  std::vector<std::size_t> out;
  for (const auto& [loc, b] : branches) out.push_back(loc);
  return out;
}

const Branch& MultiExitModel::branch(std::size_t location) const {
  auto it = branches.find(location);
  if (it == branches.end()) throw InvalidArgument("no branch at location " + std::to_string(location));
  return it->second;
}

Branch& MultiExitModel::branch(std::size_t location) {
  auto it = branches.find(location);
  if (it == branches.end()) throw InvalidArgument("no branch at location " + std::to_string(location));
  return it->second;
}

std::string branch_network_name(std::size_t location) { return "branch" + std::to_string(location); }

Branch make_branch(const Network& backbone, std::size_t classes, const BranchSpec& spec, std::uint64_t seed) {
  if (spec.location < 1 || spec.location > backbone.depth()) {
    throw InvalidArgument("branch location " + std::to_string(spec.location) + " outside 1.." +
                          std::to_string(backbone.depth()));
  }
  const Shape tap = backbone.activation_shape(spec.location);
  try {
    return Branch{spec, make_network(branch_network_name(spec.location), tap, spec.layers(classes), seed)};
  } catch (const ShapeError& e) {
    throw ShapeError("branch at location " + std::to_string(spec.location) + " cannot take tap shape " +
                     shape_to_string(tap) + ": " + e.what());
  }
}

MultiExitModel attach_branches(Network backbone, std::size_t classes, const std::vector<BranchSpec>& specs,
                               std::uint64_t seed) {
  for (std::size_t i = 1; i < specs.size(); ++i) {
    if (specs[i].location <= specs[i - 1].location) {
      throw InvalidArgument("branch locations must be strictly increasing (duplicate or unordered location " +
                            std::to_string(specs[i].location) + ")");
    }
  }
  if (classes == 0) throw InvalidArgument("multi-exit model needs at least one class");
  MultiExitModel model;
  model.backbone = std::move(backbone);
  model.backbone.params.freeze_all();
  model.classes = classes;
  for (const BranchSpec& spec : specs) {
    model.branches.emplace(spec.location,
                           make_branch(model.backbone, classes, spec, derive_seed(seed, "branch", {spec.location})));
  }
  return model;
}

Tensor tap_activations(const MultiExitModel& model, const Tensor& inputs, std::size_t location, std::size_t batch_size) {
  if (location > model.backbone.depth()) throw InvalidArgument("tap location past backbone depth");
  const std::size_t n = inputs.dim(0);
  Tensor out(batched(n, model.backbone.activation_shape(location)));
  const std::size_t per = out.sample_size();
  for (std::size_t start = 0; start < n; start += batch_size) {
    auto rows = iota_rows(start, std::min(n, start + batch_size));
    auto cache = forward(model.backbone, gather_rows(inputs, rows), Mode::eval, nullptr, location);
    const Tensor& h = cache.output();
    std::copy(h.data().begin(), h.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * per));
  }
  return out;
}

namespace {

FitReport train_branch_impl(MultiExitModel& model, std::size_t location, const BatchInputs& inputs,
                            std::span<const std::size_t> train_labels, const Validator& validate, BatchStream& sampler,
                            const BranchTrainingOptions& options) {
  Branch& branch = model.branch(location);
  const ParameterStore& backbone = model.backbone.params;
  const ParameterStore& own = branch.net.params;
  FitOptions fit_options;
  fit_options.optimizer = options.optimizer;
  fit_options.epochs = options.epochs;
  fit_options.dropout_seed = options.dropout_seed;
  fit_options.early_stopping_patience = options.early_stopping_patience;
  fit_options.gradient_guard = [&](const Gradients& grads) {
    for (const auto& [name, g] : grads) {
      if (backbone.contains(name) || !own.contains(name)) {
        throw ContractViolation("gradient for '" + name + "' is not a parameter of branch " + std::to_string(location));
      }
    }
  };
  return fit(branch.net, inputs, train_labels, sampler, fit_options, validate);
}

}  // namespace

FitReport train_branch_on_taps(MultiExitModel& model, std::size_t location, const Tensor& train_taps,
                               std::span<const std::size_t> train_labels, const Tensor& validation_taps,
                               std::span<const std::size_t> validation_labels, BatchStream& sampler,
                               const BranchTrainingOptions& options) {
  BatchInputs inputs = [&](std::span<const std::size_t> rows) { return gather_rows(train_taps, rows); };
  Validator validate;
  if (!validation_labels.empty()) {
    validate = [&](const Network& net) { return accuracy_on_taps(net, validation_taps, validation_labels); };
  }
  return train_branch_impl(model, location, inputs, train_labels, validate, sampler, options);
}

FitReport train_branch(MultiExitModel& model, std::size_t location, const Dataset& train, const Dataset& validation,
                       BatchStream& sampler, const BranchTrainingOptions& options) {
  model.branch(location);
  if (options.cache_activations) {
    const Tensor train_taps = tap_activations(model, train.inputs, location);
    const Tensor val_taps = validation.size() ? tap_activations(model, validation.inputs, location) : Tensor{};
    return train_branch_on_taps(model, location, train_taps, train.labels, val_taps, validation.labels, sampler,
                                options);
  }
  const MultiExitModel& frozen = model;
  BatchInputs inputs = [&](std::span<const std::size_t> rows) {
    return forward(frozen.backbone, gather_rows(train.inputs, rows), Mode::eval, nullptr, location).output();
  };
  Validator validate;
  if (validation.size()) {
    validate = [&](const Network& net) {
      return accuracy_on_taps(net, tap_activations(frozen, validation.inputs, location), validation.labels);
    };
  }
  return train_branch_impl(model, location, inputs, train.labels, validate, sampler, options);
}

ExitEvaluation evaluate_exit(const MultiExitModel& model, std::size_t exit, const Dataset& data) {
  if (data.size() == 0) throw InvalidArgument("evaluate_exit on an empty dataset");
  const Network* net = &model.backbone;
  if (exit != kFinalExit) net = &model.branch(exit).net;
  else if (!model.backbone.ends_with_softmax()) throw InvalidArgument("backbone output is not a softmax");

  ExitEvaluation ev;
  ev.predictions.reserve(data.size());
  std::size_t correct = 0;
  double loss = 0.0;
  constexpr std::size_t kBatch = 256;
  for (std::size_t start = 0; start < data.size(); start += kBatch) {
    auto rows = iota_rows(start, std::min(data.size(), start + kBatch));
    Tensor x = gather_rows(data.inputs, rows);
    if (exit != kFinalExit) x = forward(model.backbone, x, Mode::eval, nullptr, exit).output();
    auto cache = forward(*net, x, Mode::eval);
    std::vector<std::size_t> labels(data.labels.begin() + static_cast<std::ptrdiff_t>(start),
                                    data.labels.begin() + static_cast<std::ptrdiff_t>(start + rows.size()));
    auto ce = softmax_cross_entropy(*net, cache, labels);
    for (std::size_t s = 0; s < rows.size(); ++s) {
      const std::size_t p = argmax(cache.output().sample(s));
      ev.predictions.push_back(p);
      correct += p == labels[s];
      loss += ce.per_sample[s];
    }
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  ev.mean_loss = loss / static_cast<double>(data.size());
  return ev;
}

double entropy(std::span<const double> probabilities) {
  double h = 0.0;
  for (double p : probabilities)
    if (p > 0.0) h -= p * std::log(p);
  return h > 0.0 ? h : 0.0;
}

Inference infer_with_policy(const MultiExitModel& model, std::span<const double> sample, const ExitPolicy& policy) {
  Tensor x(batched(1, model.backbone.input_shape), std::vector<double>(sample.begin(), sample.end()));
  ActivationCache cache = forward(model.backbone, x, Mode::eval, nullptr, 0);
  for (const auto& [location, branch] : model.branches) {
    extend_forward(model.backbone, cache, location);
    auto out = forward(branch.net, cache.output(), Mode::eval);
    const auto p = out.output().sample(0);
    const double h = entropy(p);
    if (h < policy.threshold) return {argmax(p), location, h};
  }
  extend_forward(model.backbone, cache, model.backbone.depth());
  const auto p = cache.output().sample(0);
  return {argmax(p), kFinalExit, entropy(p)};
}

std::vector<Inference> infer_with_policy(const MultiExitModel& model, const Tensor& inputs, const ExitPolicy& policy) {
  std::vector<Inference> out;
  out.reserve(inputs.dim(0));
  for (std::size_t i = 0; i < inputs.dim(0); ++i) out.push_back(infer_with_policy(model, inputs.sample(i), policy));
  return out;
}

std::vector<unsigned char> serialize_model(const MultiExitModel& model) {
  ByteWriter w;
  w.raw(kModelMagic);
  w.u32(kCheckpointVersion);
  w.u64(model.classes);
  write_network(w, model.backbone);
  w.u32(static_cast<std::uint32_t>(model.branches.size()));
  for (const auto& [location, b] : model.branches) {
    w.u64(location);
    w.u64(b.spec.conv_filters);
    w.u64(b.spec.conv_kernel);
    w.u64(b.spec.pool);
    w.u64(b.spec.dense1);
    w.u64(b.spec.dense2);
    w.f64(b.spec.dropout);
    w.u8(b.spec.hidden_relu ? 1 : 0);
    write_network(w, b.net);
  }
  return w.take();
}

MultiExitModel deserialize_model(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  r.expect(kModelMagic, "multi-exit model checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported model checkpoint version " + std::to_string(version));
  MultiExitModel model;
  model.classes = r.u64();
  model.backbone = read_network(r);
  if (!model.backbone.params.all_frozen()) throw FormatError("model checkpoint backbone is not frozen");
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    BranchSpec spec;
    spec.location = r.u64();
    spec.conv_filters = r.u64();
    spec.conv_kernel = r.u64();
    spec.pool = r.u64();
    spec.dense1 = r.u64();
    spec.dense2 = r.u64();
    spec.dropout = r.f64();
    spec.hidden_relu = r.u8() != 0;
    Network net = read_network(r);
    if (spec.location < 1 || spec.location > model.backbone.depth() ||
        net.input_shape != model.backbone.activation_shape(spec.location) || net.layers != spec.layers(model.classes)) {
      throw FormatError("branch " + std::to_string(spec.location) + " does not match its spec or tap");
    }
    model.branches.emplace(spec.location, Branch{spec, std::move(net)});
  }
  if (!r.at_end()) throw FormatError("trailing bytes after model checkpoint at byte " + std::to_string(r.offset()));
  return model;
}

void save_model(const std::filesystem::path& path, const MultiExitModel& model) {
  write_file(path, serialize_model(model));
}

MultiExitModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

}  // namespace mexit
