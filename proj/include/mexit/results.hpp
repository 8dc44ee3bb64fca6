#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mexit/protocol.hpp"

namespace mexit {

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) estimator; 0 for a single value
};

Summary summarize(std::span<const double> values);

/// "72.00%±1.58": mean and std of fractional accuracies, in percent.
std::string format_accuracy(std::span<const double> accuracies);

inline const std::vector<std::string>& results_columns() {
  static const std::vector<std::string> cols{"backbone", "dataset", "branch",  "vanilla", "curriculum", "anti",
                                             "random",   "optimizer", "lr",    "teacher", "pacing"};
  return cols;
}

/// One row per branch. Strategies that were not run show "-".
std::vector<std::vector<std::string>> results_rows(const RunResult& result);

std::string results_csv(const RunResult& result);
std::string results_text(const RunResult& result);
/// branch,location,strategy,repetition,accuracy,initial_hash
std::string raw_csv(const RunResult& result);
/// branch,location,stage,candidate,validation_accuracy
std::string search_csv(const RunResult& result);

/// Writes results.csv, results.txt, raw.csv and search.csv into `dir`.
void emit_results(const RunResult& result, const std::filesystem::path& dir);

struct RawRecord {
  std::size_t branch = 0;
  std::size_t location = 0;
  std::string strategy;
  std::size_t repetition = 0;
  double accuracy = 0.0;
};

std::vector<RawRecord> read_raw_csv(const std::filesystem::path& path);

}  // namespace mexit
