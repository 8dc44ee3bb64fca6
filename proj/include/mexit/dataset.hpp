#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mexit/tensor.hpp"

namespace mexit {

/// Labelled samples. `inputs` is [N, ...sample shape]; labels are in [0, classes).
struct Dataset {
  Tensor inputs;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
  std::string provenance;
  /// Ground-truth membership of the hard subpopulation, when known
  /// (synthetic data). Empty otherwise.
  std::vector<std::uint8_t> hard;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const { return inputs.sample_shape(); }

  /// Throws InvalidArgument if the invariants do not hold.
  void validate() const;

  Dataset subset(std::span<const std::size_t> rows, const std::string& tag) const;
};

enum class CifarVariant { cifar10, cifar100 };

/// Reads CIFAR-10/100 binary batch files. A record is one label byte
/// (CIFAR-100: coarse then fine label, the fine one is used) followed by
/// 3072 channel-major pixels. Pixels are scaled to [0,1].
/// `max_records` truncates the result (0 reads everything).
Dataset load_cifar_binary(const std::vector<std::filesystem::path>& paths, CifarVariant variant,
                          std::size_t max_records = 0);

/// Gaussian class clusters with a controllable hard subpopulation.
struct SyntheticSpec {
  std::size_t classes = 10;
  Shape sample_shape{1, 8, 8};
  std::size_t samples = 1000;
  double center_scale = 1.0;
  double noise = 1.0;
  /// Fraction of samples with inflated noise.
  double hard_fraction = 0.0;
  double hard_noise_multiplier = 3.0;
  /// Probability that a hard sample's label is replaced by a different class.
  double hard_label_flip = 0.0;
  std::uint64_t seed = 0;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

/// Text format: header line `N,K,D1,D2,...`, then one sample per line with
/// comma-separated features followed by the label.
void write_text_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_text_dataset(const std::filesystem::path& path);

struct SplitSpec {
  double train = 0.6;
  double validation = 0.15;
  double test = 0.15;
  double hyper = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train, validation, test, hyper;
};

struct Splits {
  Dataset train, validation, test, hyper;
};

/// Seeded shuffle, then contiguous partition in the order train, validation,
/// test, hyper. Non-train sizes are floor(fraction * N); train takes the rest.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);
Splits split(const Dataset& data, const SplitSpec& spec);

}  // namespace mexit
