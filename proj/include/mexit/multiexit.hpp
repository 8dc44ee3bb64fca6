#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "mexit/dataset.hpp"
#include "mexit/network.hpp"
#include "mexit/training.hpp"

namespace mexit {

/// Exit id of the backbone's own output. Branch exits use their location (>= 1).
inline constexpr std::size_t kFinalExit = 0;

/// Early-exit branch attached after backbone layer `location`:
/// conv2d -> relu -> maxpool2d -> flatten -> dense -> relu -> dropout ->
/// dense -> relu -> dropout -> dense(classes) -> softmax.
struct BranchSpec {
  std::size_t location = 1;
  std::size_t conv_filters = 16;
  std::size_t conv_kernel = 3;
  std::size_t pool = 2;
  std::size_t dense1 = 128;
  std::size_t dense2 = 64;
  double dropout = 0.5;
  /// ReLU after the convolution and the two hidden dense layers.
  bool hidden_relu = true;

  std::vector<LayerSpec> layers(std::size_t classes) const;
  friend bool operator==(const BranchSpec&, const BranchSpec&) = default;
};

struct Branch {
  BranchSpec spec;
  Network net;
};

/// Frozen backbone f_1..f_L plus independently trainable branches keyed by
/// location. The backbone store is fully frozen from construction on.
struct MultiExitModel {
  Network backbone;
  std::size_t classes = 0;
  std::map<std::size_t, Branch> branches;

  std::vector<std::size_t> locations() const;
  const Branch& branch(std::size_t location) const;
  Branch& branch(std::size_t location);
};

std::string branch_network_name(std::size_t location);

/// Builds a branch for `spec` on the backbone's tap, initialized from `seed`.
Branch make_branch(const Network& backbone, std::size_t classes, const BranchSpec& spec, std::uint64_t seed);

/// Freezes the backbone and attaches one branch per spec. Locations must be
/// strictly increasing and within 1..L. Each branch's init seed is derived
/// from (seed, location).
MultiExitModel attach_branches(Network backbone, std::size_t classes, const std::vector<BranchSpec>& specs,
                               std::uint64_t seed);

/// Eval-mode backbone activations h_location for every sample.
Tensor tap_activations(const MultiExitModel& model, const Tensor& inputs, std::size_t location,
                       std::size_t batch_size = 256);

struct BranchTrainingOptions {
  OptimizerConfig optimizer;
  std::size_t epochs = 50;
  std::uint64_t dropout_seed = 0;
  std::size_t early_stopping_patience = 0;
  /// Precompute the tap activations once instead of per batch. Results are
  /// identical either way.
  bool cache_activations = true;
};

/// Classifier-wise training of one branch. Only that branch's parameters
/// change; any gradient aimed at the backbone raises ContractViolation.
FitReport train_branch(MultiExitModel& model, std::size_t location, const Dataset& train, const Dataset& validation,
                       BatchStream& sampler, const BranchTrainingOptions& options);

/// Same, on tap activations computed by the caller (shared across runs).
FitReport train_branch_on_taps(MultiExitModel& model, std::size_t location, const Tensor& train_taps,
                               std::span<const std::size_t> train_labels, const Tensor& validation_taps,
                               std::span<const std::size_t> validation_labels, BatchStream& sampler,
                               const BranchTrainingOptions& options);

struct ExitEvaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<std::size_t> predictions;
};

/// Accuracy and mean cross-entropy of one exit (kFinalExit or a branch location).
ExitEvaluation evaluate_exit(const MultiExitModel& model, std::size_t exit, const Dataset& data);

/// Shannon entropy in nats; 0 * ln 0 = 0.
double entropy(std::span<const double> probabilities);

struct ExitPolicy {
  /// An exit is taken when its output entropy is strictly below this.
  double threshold = std::numeric_limits<double>::infinity();
};

struct Inference {
  std::size_t predicted = 0;
  std::size_t exit = kFinalExit;
  double entropy = 0.0;
};

/// Walks branch exits in ascending location, then the final output, and
/// returns at the first exit whose entropy is below the threshold. The
/// backbone runs only as far as the exit taken.
Inference infer_with_policy(const MultiExitModel& model, std::span<const double> sample, const ExitPolicy& policy);
std::vector<Inference> infer_with_policy(const MultiExitModel& model, const Tensor& inputs, const ExitPolicy& policy);

/// Model checkpoint: magic "MEXTMEM\0" | u32 version | u64 classes |
/// backbone network | u32 branch count | per branch: u64 location,
/// u64 conv_filters, u64 conv_kernel, u64 pool, u64 dense1, u64 dense2,
/// f64 dropout, u8 hidden_relu, branch network.
std::vector<unsigned char> serialize_model(const MultiExitModel& model);
MultiExitModel deserialize_model(std::span<const unsigned char> bytes);
void save_model(const std::filesystem::path& path, const MultiExitModel& model);
MultiExitModel load_model(const std::filesystem::path& path);

}  // namespace mexit
