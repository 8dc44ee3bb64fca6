#include "mexit/results.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mexit/error.hpp"

namespace mexit {

namespace {

std::string printf_string(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

const char* optimizer_label(OptimizerKind k) { return k == OptimizerKind::sgd ? "SGD" : "Adam"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("summarize: no values");
  Summary s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::string format_accuracy(std::span<const double> accuracies) {
  const Summary s = summarize(accuracies);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%%\xC2\xB1%.2f", 100.0 * s.mean, 100.0 * s.std);
  return buf;
}

std::vector<std::vector<std::string>> results_rows(const RunResult& r) {
  static const StrategyKind order[] = {StrategyKind::vanilla, StrategyKind::curriculum, StrategyKind::anti_curriculum,
                                       StrategyKind::random_curriculum};
  std::vector<std::vector<std::string>> rows;
  for (const BranchResult& b : r.branches) {
    std::vector<std::string> row{r.backbone, r.dataset, std::to_string(b.number)};
    for (StrategyKind s : order) {
      auto it = b.cells.find(s);
      row.push_back(it == b.cells.end() ? "-" : format_accuracy(it->second.accuracies()));
    }
    row.push_back(optimizer_label(b.optimizer.kind));
    row.push_back(printf_string("%g", b.optimizer.learning_rate));
    auto cur = b.pacing.find(StrategyKind::curriculum);
    row.push_back(cur == b.pacing.end() ? "-" : cur->second.teacher);
    row.push_back(cur == b.pacing.end() ? "-" : cur->second.pacing_label());
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string results_csv(const RunResult& r) {
  std::ostringstream out;
  const auto& cols = results_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& row : results_rows(r)) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
  return out.str();
}

namespace {

/// Display width in code points; the ± sign is two bytes.
std::size_t width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80;
  return w;
}

}  // namespace

std::string results_text(const RunResult& r) {
  std::vector<std::vector<std::string>> table{results_columns()};
  for (auto& row : results_rows(r)) table.push_back(std::move(row));
  std::vector<std::size_t> w(table[0].size(), 0);
  for (const auto& row : table)
    for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::max(w[i], width(row[i]));

  std::ostringstream out;
  for (std::size_t ri = 0; ri < table.size(); ++ri) {
    const auto& row = table[ri];
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) line += "  ";
      line += row[i];
      if (i + 1 < row.size()) line.append(w[i] - width(row[i]), ' ');
    }
    out << line << '\n';
    if (ri == 0) {
      std::size_t total = 0;
      for (std::size_t x : w) total += x;
      out << std::string(total + 2 * (w.size() - 1), '-') << '\n';
    }
  }
  out << '\n' << "backbone validation accuracy: " << printf_string("%.2f%%", 100.0 * r.backbone_validation_accuracy)
      << '\n'
      << "backbone test accuracy: " << printf_string("%.2f%%", 100.0 * r.backbone_test_accuracy) << '\n';
  for (const auto& w2 : r.warnings) out << "warning: " << w2 << '\n';
  return out.str();
}

std::string raw_csv(const RunResult& r) {
  std::ostringstream out;
  out << "branch,location,strategy,repetition,accuracy,initial_hash\n";
  for (const BranchResult& b : r.branches) {
    for (StrategyKind s : r.strategies) {
      auto it = b.cells.find(s);
      if (it == b.cells.end()) continue;
      const auto& reps = it->second.repetitions;
      for (std::size_t i = 0; i < reps.size(); ++i) {
        out << b.number << ',' << b.location << ',' << to_string(s) << ',' << i << ','
            << printf_string("%.17g", reps[i].test_accuracy) << ',' << hex64(reps[i].initial_hash) << '\n';
      }
    }
  }
  return out.str();
}

std::string search_csv(const RunResult& r) {
  std::ostringstream out;
  out << "branch,location,stage,candidate,validation_accuracy\n";
  for (const BranchResult& b : r.branches) {
    auto emit = [&](const std::vector<Candidate>& cs) {
      for (const auto& c : cs) {
        out << b.number << ',' << b.location << ',' << c.stage << ',' << c.label << ','
            << printf_string("%.17g", c.validation_accuracy) << '\n';
      }
    };
    emit(b.optimizer.candidates);
    for (StrategyKind s : r.strategies) {
      auto it = b.pacing.find(s);
      if (it != b.pacing.end()) emit(it->second.candidates);
    }
  }
  return out.str();
}

void emit_results(const RunResult& r, const std::filesystem::path& dir) {
  if (r.branches.empty()) throw InvalidArgument("emit_results: no results");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  write_text(dir / "results.csv", results_csv(r));
  write_text(dir / "results.txt", results_text(r));
  write_text(dir / "raw.csv", raw_csv(r));
  write_text(dir / "search.csv", search_csv(r));
}

std::vector<RawRecord> read_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<RawRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
    try {
      out.push_back({std::stoul(f[0]), std::stoul(f[1]), f[2], std::stoul(f[3]), std::stod(f[4])});
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed record");
    }
  }
  return out;
}

}  // namespace mexit
