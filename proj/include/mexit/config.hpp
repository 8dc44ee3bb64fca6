#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mexit/curriculum.hpp"
#include "mexit/dataset.hpp"
#include "mexit/multiexit.hpp"
#include "mexit/optimizer.hpp"
#include "mexit/pacing.hpp"

namespace mexit {

inline constexpr int kConfigSchemaVersion = 1;

struct DatasetSource {
  /// synthetic | cifar10 | cifar100 | text
  std::string kind = "synthetic";
  std::vector<std::string> paths;
  std::size_t max_records = 0;
  SyntheticSpec synthetic;
};

inline OptimizerConfig adam_optimizer(double learning_rate) {
  OptimizerConfig c;
  c.kind = OptimizerKind::adam;
  c.learning_rate = learning_rate;
  return c;
}

/// conv-relu-maxpool x2, flatten, dense(classes), softmax.
struct BackboneSpec {
  std::string name = "cnn";
  std::size_t conv1_filters = 8;
  std::size_t conv2_filters = 16;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer = adam_optimizer(1e-3);

  std::vector<LayerSpec> layers(std::size_t classes) const;
};

/// `self` scores with the frozen backbone; `mlp` trains a separate
/// flatten-dense-relu-dropout-dense-softmax network on the train split.
struct TeacherSpec {
  std::string name = "self";
  std::string kind = "self";
  std::size_t hidden = 64;
  double dropout = 0.5;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer = adam_optimizer(1e-3);
};

struct OptimizerGrid {
  std::vector<OptimizerKind> kinds{OptimizerKind::sgd, OptimizerKind::adam};
  std::vector<double> learning_rates{1e-1, 0.12, 1e-2, 1e-3, 1e-4, 1e-5};
  PlateauPolicy plateau;
};

/// FEP(100), FEP(200), FEP(300) with s=0.04, r=1.9, then SSP(300) with s=0.30.
std::vector<PacingConfig> default_pacing_grid();

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string name = "experiment";
  DatasetSource dataset;
  SplitSpec split;
  BackboneSpec backbone;
  std::vector<BranchSpec> branches;
  std::vector<TeacherSpec> teachers{TeacherSpec{}};
  std::vector<StrategyKind> strategies{StrategyKind::vanilla, StrategyKind::curriculum, StrategyKind::anti_curriculum,
                                       StrategyKind::random_curriculum};
  OptimizerGrid optimizer_grid;
  std::vector<PacingConfig> pacing_grid = default_pacing_grid();
  std::size_t epochs = 50;
  /// Epochs per candidate during optimizer and pacing selection; 0 uses `epochs`.
  std::size_t search_epochs = 0;
  std::size_t batch_size = 32;
  std::size_t repetitions = 5;
  std::uint64_t master_seed = 2021;
  std::size_t early_stopping_patience = 0;
  /// Worker threads for independent (strategy, repetition) cells.
  std::size_t threads = 1;

  std::size_t effective_search_epochs() const { return search_epochs ? search_epochs : epochs; }
  void validate() const;
};

ExperimentConfig parse_config(std::string_view json_text);
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace mexit
