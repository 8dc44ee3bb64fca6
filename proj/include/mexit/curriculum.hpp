#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mexit/dataset.hpp"
#include "mexit/network.hpp"
#include "mexit/pacing.hpp"
#include "mexit/rng.hpp"
#include "mexit/training.hpp"

namespace mexit {

/// Per-sample difficulty scores and the ascending stable sort they induce.
struct DifficultyOrder {
  std::vector<double> scores;             // by original sample index
  std::vector<std::size_t> permutation;   // sample indices, easiest first

  static DifficultyOrder from_scores(std::vector<double> scores);
  std::size_t size() const { return scores.size(); }
};

/// Anything that can report a per-sample loss on a dataset.
using PerSampleLoss = std::function<std::vector<double>(const Dataset&)>;

/// Eval-mode cross-entropy of every sample under a softmax-terminated network.
std::vector<double> per_sample_loss(const Network& teacher, const Dataset& data, std::size_t batch_size = 256);

DifficultyOrder score_with_teacher(const Network& teacher, const Dataset& data);
DifficultyOrder score_with_teacher(const PerSampleLoss& teacher, const Dataset& data);

/// Score file: one `index,score` line per sample, ascending index.
void write_score_file(const std::filesystem::path& path, const DifficultyOrder& order);
DifficultyOrder read_score_file(const std::filesystem::path& path);

enum class StrategyKind { vanilla, curriculum, anti_curriculum, random_curriculum };

std::string_view to_string(StrategyKind kind);
StrategyKind strategy_kind_from_string(std::string_view name);

/// curriculum: easiest first. anti_curriculum: exact reverse. random_curriculum:
/// seeded uniform permutation that ignores the scores. vanilla: identity.
std::vector<std::size_t> order_for_strategy(const DifficultyOrder& order, StrategyKind kind, std::uint64_t seed);

/// N_b positions drawn uniformly from `range`: without replacement when the
/// range holds at least N_b positions, with replacement otherwise.
std::vector<std::size_t> sample_batch(IndexRange range, std::size_t batch_size, Rng& rng);

/// Mini-batch schedule over one training set.
///
/// Vanilla: each epoch draws a fresh seeded shuffle and splits it into
/// floor(N / N_b) consecutive batches.
///
/// Paced: batch t (counted globally across epochs) is drawn uniformly from
/// active_range(pacing, t) of the strategy permutation. Draws continue one
/// without-replacement pass over the range until it has fewer than N_b
/// positions left or the range changes, then the pass restarts. With
/// lambda = 1 and the identity permutation this reproduces the vanilla
/// stream exactly.
class ScheduleStream : public BatchStream {
 public:
  static ScheduleStream vanilla(std::size_t n, std::size_t batch_size, std::size_t epochs, std::uint64_t seed);
  static ScheduleStream paced(std::vector<std::size_t> permutation, PacingFunction pacing, std::size_t batch_size,
                              std::size_t epochs, std::uint64_t seed);

  std::optional<std::vector<std::size_t>> next() override;
  std::size_t batches_per_epoch() const override { return batches_per_epoch_; }

  std::size_t total_batches() const { return batches_per_epoch_ * epochs_; }
  std::size_t batch_index() const { return t_; }
  /// Range used for the most recent batch (positions into the permutation).
  IndexRange last_range() const { return last_range_; }
  const std::vector<std::size_t>& permutation() const { return permutation_; }

 private:
  ScheduleStream(std::vector<std::size_t> permutation, std::optional<PacingFunction> pacing, std::size_t batch_size,
                 std::size_t epochs, std::uint64_t seed);

  std::vector<std::size_t> permutation_;
  std::optional<PacingFunction> pacing_;
  std::size_t n_;
  std::size_t batch_size_;
  std::size_t epochs_;
  std::size_t batches_per_epoch_;
  Rng rng_;
  std::size_t t_ = 0;
  std::vector<std::size_t> pool_;
  IndexRange pool_range_{};
  std::size_t cursor_ = 0;
  IndexRange last_range_{};
};

/// Builds the stream for a strategy: vanilla ignores `permutation` and `pacing`.
ScheduleStream schedule_stream(StrategyKind kind, std::vector<std::size_t> permutation,
                               const std::optional<PacingConfig>& pacing, std::size_t batch_size, std::size_t epochs,
                               std::uint64_t seed);

}  // namespace mexit
