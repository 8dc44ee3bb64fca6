#include "mexit/curriculum.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "mexit/error.hpp"

namespace mexit {

DifficultyOrder DifficultyOrder::from_scores(std::vector<double> scores) {
  DifficultyOrder order;
  order.permutation.resize(scores.size());
  std::iota(order.permutation.begin(), order.permutation.end(), std::size_t{0});
  std::stable_sort(order.permutation.begin(), order.permutation.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  order.scores = std::move(scores);
  return order;
}

std::vector<double> per_sample_loss(const Network& teacher, const Dataset& data, std::size_t batch_size) {
  if (!teacher.ends_with_softmax()) throw InvalidArgument("teacher '" + teacher.name + "' must end with softmax");
  if (data.sample_shape() != teacher.input_shape) {
    throw ShapeError("teacher '" + teacher.name + "' expects " + shape_to_string(teacher.input_shape) +
                     ", dataset has " + shape_to_string(data.sample_shape()));
  }
  std::vector<double> losses;
  losses.reserve(data.size());
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    rows.clear();
    for (std::size_t r = start; r < std::min(data.size(), start + batch_size); ++r) rows.push_back(r);
    auto cache = forward(teacher, gather_rows(data.inputs, rows), Mode::eval);
    std::vector<std::size_t> labels;
    for (std::size_t r : rows) labels.push_back(data.labels[r]);
    auto loss = softmax_cross_entropy(teacher, cache, labels);
    losses.insert(losses.end(), loss.per_sample.begin(), loss.per_sample.end());
  }
  return losses;
}

DifficultyOrder score_with_teacher(const Network& teacher, const Dataset& data) {
  return DifficultyOrder::from_scores(per_sample_loss(teacher, data));
}

DifficultyOrder score_with_teacher(const PerSampleLoss& teacher, const Dataset& data) {
  auto scores = teacher(data);
  if (scores.size() != data.size()) throw InvalidArgument("teacher returned the wrong number of scores");
  return DifficultyOrder::from_scores(std::move(scores));
}

void write_score_file(const std::filesystem::path& path, const DifficultyOrder& order) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  char buf[64];
  for (std::size_t i = 0; i < order.scores.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, order.scores[i]);
    out << buf;
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

DifficultyOrder read_score_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<double> scores;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError(where + ": expected index,score");
    std::size_t index = 0;
    double score = 0.0;
    auto r1 = std::from_chars(line.data(), line.data() + comma, index);
    auto r2 = std::from_chars(line.data() + comma + 1, line.data() + line.size(), score);
    if (r1.ec != std::errc() || r1.ptr != line.data() + comma || r2.ec != std::errc() ||
        r2.ptr != line.data() + line.size()) {
      throw FormatError(where + ": cannot parse '" + line + "'");
    }
    if (index != scores.size()) throw FormatError(where + ": indices must ascend from 0 without gaps");
    if (!(score >= 0.0)) throw FormatError(where + ": score must be a nonnegative number");
    scores.push_back(score);
  }
  return DifficultyOrder::from_scores(std::move(scores));
}

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::vanilla: return "vanilla";
    case StrategyKind::curriculum: return "curriculum";
    case StrategyKind::anti_curriculum: return "anti";
    case StrategyKind::random_curriculum: return "random";
  }
  return "unknown";
}

StrategyKind strategy_kind_from_string(std::string_view name) {
  if (name == "vanilla") return StrategyKind::vanilla;
  if (name == "curriculum") return StrategyKind::curriculum;
  if (name == "anti" || name == "anti_curriculum") return StrategyKind::anti_curriculum;
  if (name == "random" || name == "random_curriculum") return StrategyKind::random_curriculum;
  throw InvalidArgument("unknown strategy '" + std::string(name) + "'");
}

std::vector<std::size_t> order_for_strategy(const DifficultyOrder& order, StrategyKind kind, std::uint64_t seed) {
  std::vector<std::size_t> perm;
  switch (kind) {
    case StrategyKind::curriculum:
      return order.permutation;
    case StrategyKind::anti_curriculum:
      return {order.permutation.rbegin(), order.permutation.rend()};
    case StrategyKind::random_curriculum: {
      perm.resize(order.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng rng(seed);
      rng.shuffle(perm);
      return perm;
    }
    case StrategyKind::vanilla:
      perm.resize(order.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      return perm;
  }
  return perm;
}

std::vector<std::size_t> sample_batch(IndexRange range, std::size_t batch_size, Rng& rng) {
  if (range.size() == 0) throw InvalidArgument("sample_batch: empty range");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  if (range.size() < batch_size) {
    for (std::size_t k = 0; k < batch_size; ++k) out.push_back(range.lo + rng.index(range.size()));
    return out;
  }
  std::vector<std::size_t> pool(range.size());
  std::iota(pool.begin(), pool.end(), range.lo);
  rng.shuffle_prefix(std::span<std::size_t>(pool), batch_size);
  out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(batch_size));
  return out;
}

ScheduleStream::ScheduleStream(std::vector<std::size_t> permutation, std::optional<PacingFunction> pacing,
                               std::size_t batch_size, std::size_t epochs, std::uint64_t seed)
    : permutation_(std::move(permutation)),
      pacing_(std::move(pacing)),
      n_(permutation_.size()),
      batch_size_(batch_size),
      epochs_(epochs),
      batches_per_epoch_(batch_size ? n_ / batch_size : 0),
      rng_(seed) {
  if (batch_size_ == 0 || n_ < batch_size_) {
    throw InvalidArgument("schedule needs N >= N_b >= 1 (N=" + std::to_string(n_) + ", N_b=" +
                          std::to_string(batch_size_) + ")");
  }
}

ScheduleStream ScheduleStream::vanilla(std::size_t n, std::size_t batch_size, std::size_t epochs, std::uint64_t seed) {
  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  return ScheduleStream(std::move(identity), std::nullopt, batch_size, epochs, seed);
}

ScheduleStream ScheduleStream::paced(std::vector<std::size_t> permutation, PacingFunction pacing,
                                     std::size_t batch_size, std::size_t epochs, std::uint64_t seed) {
  std::vector<std::size_t> check(permutation);
  std::sort(check.begin(), check.end());
  for (std::size_t i = 0; i < check.size(); ++i) {
    if (check[i] != i) throw InvalidArgument("schedule permutation is not a bijection on 0..N-1");
  }
  return ScheduleStream(std::move(permutation), std::move(pacing), batch_size, epochs, seed);
}

std::optional<std::vector<std::size_t>> ScheduleStream::next() {
  if (t_ >= total_batches()) return std::nullopt;
  std::vector<std::size_t> batch;
  batch.reserve(batch_size_);

  if (!pacing_) {
    if (t_ % batches_per_epoch_ == 0) {
      pool_ = permutation_;
      rng_.shuffle_prefix(std::span<std::size_t>(pool_), batches_per_epoch_ * batch_size_);
      cursor_ = 0;
    }
    last_range_ = {0, n_};
    batch.assign(pool_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                 pool_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
    cursor_ += batch_size_;
    ++t_;
    return batch;
  }

  const IndexRange range = active_range(*pacing_, t_, n_, batch_size_);
  last_range_ = range;
  if (range.size() < batch_size_) {
    pool_range_ = {};
    for (std::size_t k = 0; k < batch_size_; ++k) batch.push_back(permutation_[range.lo + rng_.index(range.size())]);
  } else {
    if (range != pool_range_ || pool_.size() - cursor_ < batch_size_) {
      pool_.resize(range.size());
      std::iota(pool_.begin(), pool_.end(), range.lo);
      pool_range_ = range;
      cursor_ = 0;
    }
    const std::size_t m = pool_.size();
    for (std::size_t i = cursor_; i < cursor_ + batch_size_; ++i) {
      if (i + 1 < m) std::swap(pool_[i], pool_[i + rng_.index(m - i)]);
      batch.push_back(permutation_[pool_[i]]);
    }
    cursor_ += batch_size_;
  }
  ++t_;
  return batch;
}

ScheduleStream schedule_stream(StrategyKind kind, std::vector<std::size_t> permutation,
                               const std::optional<PacingConfig>& pacing, std::size_t batch_size, std::size_t epochs,
                               std::uint64_t seed) {
  if (kind == StrategyKind::vanilla) return ScheduleStream::vanilla(permutation.size(), batch_size, epochs, seed);
  if (!pacing) throw InvalidArgument("strategy '" + std::string(to_string(kind)) + "' needs a pacing config");
  return ScheduleStream::paced(std::move(permutation), PacingFunction(*pacing), batch_size, epochs, seed);
}

}  // namespace mexit
