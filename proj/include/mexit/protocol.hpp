#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mexit/config.hpp"
#include "mexit/curriculum.hpp"
#include "mexit/dataset.hpp"
#include "mexit/multiexit.hpp"

namespace mexit {

/// Progress messages; the protocol never writes to stdout itself.
using Logger = std::function<void(const std::string&)>;

Dataset load_dataset(const DatasetSource& source);

struct PreparedBackbone {
  Network network;  // frozen
  double validation_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<std::string> warnings;
};

/// Vanilla training on the train split, then freeze. A backbone that does not
/// beat chance on validation is kept and a warning is recorded.
PreparedBackbone prepare_backbone(const ExperimentConfig& config, const Splits& splits, const Logger& log = {});

/// Difficulty orders from one teacher, over the train and hyper splits.
struct TeacherScores {
  std::string name;
  DifficultyOrder train;
  DifficultyOrder hyper;
};

/// Backbone activations at one tap for every split.
struct TapSet {
  Tensor train, validation, test, hyper;
};

/// Everything the protocol steps share once data and backbone are ready.
struct Experiment {
  ExperimentConfig config;
  SplitIndices split_rows;
  Splits splits;
  MultiExitModel model;  // backbone frozen; branches hold their spec only
  double backbone_validation_accuracy = 0.0;
  double backbone_test_accuracy = 0.0;
  std::vector<TeacherScores> teachers;
  std::map<std::size_t, TapSet> taps;
  std::vector<std::string> warnings;

  const BranchSpec& branch_spec(std::size_t location) const;
  const TeacherScores& teacher(const std::string& name) const;
  std::size_t branch_number(std::size_t location) const;
};

/// The trained scoring network for `spec`: the backbone itself for `self`.
Network teacher_network(const ExperimentConfig& config, const TeacherSpec& spec, std::size_t teacher_index,
                        const Splits& splits, const Network& backbone);

/// Teacher from a score file covering the whole dataset (original indices).
TeacherScores teacher_from_scores(const std::string& name, const DifficultyOrder& full, const SplitIndices& rows);

/// Trains teacher `spec` (or reuses the backbone for `self`) and scores the
/// train and hyper splits.
TeacherScores score_teacher(const ExperimentConfig& config, const TeacherSpec& spec, std::size_t teacher_index,
                            const Splits& splits, const Network& backbone);

Experiment prepare_experiment(const ExperimentConfig& config, const Logger& log = {});

struct Candidate {
  std::string stage;  // optimizer | curriculum | anti | random
  std::string label;
  double validation_accuracy = 0.0;
};

struct OptimizerChoice {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.0;
  double validation_accuracy = 0.0;
  std::vector<Candidate> candidates;

  OptimizerConfig config(const PlateauPolicy& plateau) const;
};

/// Vanilla sweep over the optimizer grid on the hyper split, scored on
/// validation. Ties go to the lower learning rate, then SGD before Adam.
OptimizerChoice select_vanilla_optimizer(const Experiment& experiment, std::size_t location);

struct PacingChoice {
  std::string teacher;  // "-" for random_curriculum
  PacingConfig pacing;
  double validation_accuracy = 0.0;
  std::vector<Candidate> candidates;

  std::string pacing_label() const { return PacingFunction(pacing).label(); }
};

/// Teacher x pacing grid on the hyper split for every paced strategy in the
/// config. Ties keep the first candidate in grid order.
std::map<StrategyKind, PacingChoice> grid_search_pacing(const Experiment& experiment, std::size_t location,
                                                        const OptimizerChoice& optimizer);

struct RepetitionResult {
  double test_accuracy = 0.0;
  std::uint64_t initial_hash = 0;  // FNV-1a of the initial branch checkpoint
  std::uint64_t final_hash = 0;
};

struct CellResult {
  std::size_t location = 0;
  StrategyKind strategy = StrategyKind::vanilla;
  std::vector<RepetitionResult> repetitions;
  double mean = 0.0;
  double std = 0.0;
  /// Branch after repetition 0.
  std::optional<Branch> first_branch;

  std::vector<double> accuracies() const;
};

/// Trains R repetitions of one strategy and scores each once on test.
/// Repetition i starts from the same branch parameters for every strategy.
CellResult run_cell(const Experiment& experiment, std::size_t location, StrategyKind strategy,
                    const OptimizerChoice& optimizer, const std::optional<PacingChoice>& pacing);

/// One repetition of one cell; run_cell is R of these.
RepetitionResult run_repetition(const Experiment& experiment, std::size_t location, StrategyKind strategy,
                                const OptimizerChoice& optimizer, const std::optional<PacingChoice>& pacing,
                                std::size_t repetition, Branch* trained = nullptr);

struct BranchResult {
  std::size_t location = 0;
  std::size_t number = 0;  // 1-based, in location order
  OptimizerChoice optimizer;
  std::map<StrategyKind, PacingChoice> pacing;
  std::map<StrategyKind, CellResult> cells;
};

struct RunResult {
  std::string backbone;
  std::string dataset;
  double backbone_validation_accuracy = 0.0;
  double backbone_test_accuracy = 0.0;
  std::vector<StrategyKind> strategies;
  std::vector<BranchResult> branches;
  std::vector<std::string> warnings;
  std::uint64_t backbone_hash_before = 0;
  std::uint64_t backbone_hash_after = 0;
};

/// Full protocol: per branch, optimizer sweep, pacing grid, then all cells.
/// Cells run on `config.threads` workers; results do not depend on it.
RunResult run_protocol(Experiment& experiment, const Logger& log = {});

/// Backbone plus, for each branch, the repetition-0 network of `strategy`
/// (or the first strategy run when it was not).
MultiExitModel trained_model(const Experiment& experiment, const RunResult& result, StrategyKind strategy);

std::uint64_t network_hash(const Network& net);

}  // namespace mexit
