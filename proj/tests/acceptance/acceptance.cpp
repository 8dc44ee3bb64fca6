// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//   acceptance            run everything
//   acceptance --only X   run one criterion (exit 0 pass, 1 fail, 77 skip)
//   acceptance --list     print criterion names

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support/gradcheck.hpp"
#include "mexit/checkpoint.hpp"
#include "mexit/config.hpp"
#include "mexit/curriculum.hpp"
#include "mexit/error.hpp"
#include "mexit/multiexit.hpp"
#include "mexit/protocol.hpp"
#include "mexit/results.hpp"

using namespace mexit;
namespace fs = std::filesystem;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::pass;
  std::string detail;
};

struct Check {
  Outcome out;
  void require(bool ok, const std::string& what) {
    if (!ok && out.status == Status::pass) {
      out.status = Status::fail;
      out.detail = what;
    }
  }
  bool ok() const { return out.status == Status::pass; }
};

std::string num(double v, const char* fmt = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

fs::path source_dir() { return fs::path(MEXIT_SOURCE_DIR); }

fs::path work_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mexit_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- pacing exactness ------------------------------------------------------

Outcome pacing_exactness() {
  Check c;
  struct Row {
    PacingConfig config;
    std::size_t delta;
    double expect[5];  // t = 0, delta-1, delta, 2 delta, 10 delta
  };
  // 0.04 * 1.9 = 0.076, 0.04 * 1.9^2 = 0.1444; 0.04 * 1.9^10 > 1 so it clamps.
  const std::vector<Row> rows{
      {PacingConfig::fixed_exponential(0.04, 1.9, 100), 100, {0.04, 0.04, 0.076, 0.1444, 1.0}},
      {PacingConfig::fixed_exponential(0.04, 1.9, 200), 200, {0.04, 0.04, 0.076, 0.1444, 1.0}},
      {PacingConfig::fixed_exponential(0.04, 1.9, 300), 300, {0.04, 0.04, 0.076, 0.1444, 1.0}},
      {PacingConfig::single_step(0.30, 300), 300, {0.30, 0.30, 1.0, 1.0, 1.0}},
  };
  double worst = 0.0;
  for (const Row& r : rows) {
    const PacingFunction f(r.config);
    const std::size_t ts[5] = {0, r.delta - 1, r.delta, 2 * r.delta, 10 * r.delta};
    for (int i = 0; i < 5; ++i) {
      const double err = std::abs(pacing_eval(f, ts[i]) - r.expect[i]);
      worst = std::max(worst, err);
      c.require(err <= 1e-12, f.label() + " at t=" + std::to_string(ts[i]) + ": " + num(pacing_eval(f, ts[i]), "%.17g") +
                                  " vs " + num(r.expect[i], "%.17g"));
    }
  }
  // Extra hand value: FEP(300) at t=900 is 0.04 * 1.9^3.
  const double t900 = pacing_eval(PacingFunction(PacingConfig::fixed_exponential(0.04, 1.9, 300)), 900);
  c.require(std::abs(t900 - 0.27436) <= 1e-12, "FEP(300) at t=900: " + num(t900, "%.17g"));
  if (c.ok()) c.out.detail = "4 configs x 5 points, max abs error " + num(worst) + " (tol 1e-12)";
  return c.out;
}

// --- monotone clamp ---------------------------------------------------------

Outcome monotone_clamp() {
  Check c;
  Rng rng(20211);
  const PacingKind kinds[] = {PacingKind::linear,           PacingKind::root,        PacingKind::root_p,
                              PacingKind::geometric,        PacingKind::fixed_exponential,
                              PacingKind::single_step,      PacingKind::baby_step};
  std::size_t evaluated = 0;
  for (int trial = 0; trial < 1000 && c.ok(); ++trial) {
    PacingConfig p;
    p.kind = kinds[rng.index(std::size(kinds))];
    p.start = rng.uniform(0.01, 1.0);
    p.full_at = rng.uniform(1.0, 5000.0);
    p.exponent = rng.uniform(1.0, 5.0);
    p.growth = rng.uniform(1.1, 3.0);
    p.step = 1 + rng.index(300);
    p.buckets = 1 + rng.index(10);
    const PacingFunction f(p);
    const auto sat = f.saturation();
    const std::string tag = f.label() + " trial " + std::to_string(trial);
    c.require(sat.has_value(), tag + ": no saturation point");
    if (!sat) break;
    double prev = 0.0;
    const std::size_t end = *sat + 500;
    for (std::size_t t = 0; t <= end; ++t) {
      const double v = f(t);
      ++evaluated;
      if (!(v > 0.0 && v <= 1.0)) c.require(false, tag + ": lambda(" + std::to_string(t) + ") = " + num(v) + " outside (0,1]");
      if (v < prev) c.require(false, tag + ": decreases at t=" + std::to_string(t));
      if (t >= *sat && v != 1.0) c.require(false, tag + ": not 1 after saturation at t=" + std::to_string(t));
      if (!c.ok()) break;
      prev = v;
    }
    if (*sat > 0) c.require(f(*sat - 1) < 1.0, tag + ": saturation point is not the first t with lambda = 1");
    for (std::size_t t : {std::size_t{1} << 20, std::size_t{1} << 40, std::size_t{0} - 1})
      c.require(f(t) == 1.0, tag + ": not 1 at large t");
  }
  if (c.ok()) c.out.detail = "1000 configs, " + std::to_string(evaluated) + " evaluations";
  return c.out;
}

// --- gradient suite ---------------------------------------------------------

Outcome gradient_suite() {
  Check c;
  const LayerKind kinds[] = {LayerKind::dense,   LayerKind::conv2d,  LayerKind::maxpool2d, LayerKind::relu,
                             LayerKind::flatten, LayerKind::dropout, LayerKind::softmax};
  double worst = 0.0;
  std::string worst_at;
  for (LayerKind kind : kinds) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto inst = testing::random_instance(kind, 5000 + seed);
      auto res = testing::check_network_gradients(inst.net, inst.input, inst.mode, 900 + seed);
      if (res.worst > worst) {
        worst = res.worst;
        worst_at = std::string(to_string(kind)) + "#" + std::to_string(seed) + " " + res.worst_name;
      }
      c.require(res.worst <= 1e-4, std::string(to_string(kind)) + " instance " + std::to_string(seed) + " (" +
                                       res.worst_name + "): relative error " + num(res.worst));
    }
  }
  if (c.ok()) c.out.detail = "7 kinds x 20 instances, worst relative error " + num(worst) + " at " + worst_at + " (tol 1e-4)";
  return c.out;
}

// --- degenerate equivalence -------------------------------------------------

/// Wraps a stream and hashes the network before every batch it hands out.
class RecordingStream : public BatchStream {
 public:
  RecordingStream(BatchStream& inner, const Network& net) : inner_(inner), net_(net) {}
  std::optional<std::vector<std::size_t>> next() override {
    hashes.push_back(network_hash(net_));
    auto b = inner_.next();
    if (b) batches.push_back(*b);
    return b;
  }
  std::size_t batches_per_epoch() const override { return inner_.batches_per_epoch(); }
  std::vector<std::uint64_t> hashes;
  std::vector<std::vector<std::size_t>> batches;

 private:
  BatchStream& inner_;
  const Network& net_;
};

Outcome degenerate_equivalence() {
  Check c;
  SyntheticSpec spec;
  spec.samples = 512;
  spec.hard_fraction = 0.2;
  spec.seed = 31;
  const Dataset d = generate_synthetic(spec);
  const std::vector<LayerSpec> layers{LayerSpec::conv2d(4), LayerSpec::relu(),      LayerSpec::maxpool2d(),
                                      LayerSpec::flatten(), LayerSpec::dense(32),   LayerSpec::relu(),
                                      LayerSpec::dropout(0.5), LayerSpec::dense(10), LayerSpec::softmax()};
  const std::size_t epochs = 5, batch = 32;
  const std::uint64_t seed = 77;
  std::vector<std::size_t> identity(d.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;

  auto run = [&](StrategyKind kind, std::vector<std::uint64_t>& hashes, std::vector<std::vector<std::size_t>>& batches,
                 std::vector<unsigned char>& final_bytes) {
    Network net = make_network("m", d.sample_shape(), layers, 5);
    std::optional<PacingConfig> pacing;
    if (kind != StrategyKind::vanilla) pacing = PacingConfig::single_step(1.0, 1);  // lambda = 1 everywhere
    ScheduleStream s = schedule_stream(kind, identity, pacing, batch, epochs, seed);
    RecordingStream rec(s, net);
    FitOptions o;
    o.optimizer = adam_optimizer(1e-2);
    o.epochs = epochs;
    o.dropout_seed = 9;
    fit(net, [&](std::span<const std::size_t> r) { return gather_rows(d.inputs, r); }, d.labels, rec, o,
        [&](const Network& n) { return accuracy(n, d.inputs, d.labels); });
    hashes = rec.hashes;
    batches = rec.batches;
    final_bytes = serialize_network(net);
  };
  std::vector<std::uint64_t> hv, hc;
  std::vector<std::vector<std::size_t>> bv, bc;
  std::vector<unsigned char> fv, fc;
  run(StrategyKind::vanilla, hv, bv, fv);
  run(StrategyKind::curriculum, hc, bc, fc);
  c.require(bv.size() == epochs * (d.size() / batch), "vanilla stream produced " + std::to_string(bv.size()) + " batches");
  c.require(bv == bc, "batch streams differ");
  c.require(hv == hc, "parameter trajectories differ");
  c.require(fv == fc, "final parameters differ");
  if (c.ok()) {
    c.out.detail = std::to_string(hv.size()) + " parameter snapshots over " + std::to_string(epochs) +
                   " epochs, bitwise identical";
  }
  return c.out;
}

// --- desk-scale model shared by the frozen-backbone and entropy criteria ----

struct DeskModel {
  Splits splits;
  MultiExitModel model;
};

DeskModel desk_model(std::size_t backbone_epochs) {
  SyntheticSpec spec;
  spec.samples = 2000;
  spec.hard_fraction = 0.3;
  spec.hard_noise_multiplier = 2.5;
  spec.seed = 7;
  DeskModel m;
  m.splits = split(generate_synthetic(spec), SplitSpec{0.6, 0.15, 0.15, 0.1, 11});
  ExperimentConfig cfg;
  cfg.backbone.epochs = backbone_epochs;
  PreparedBackbone bb = prepare_backbone(cfg, m.splits);
  BranchSpec b3, b6;
  b3.location = 3;
  b6.location = 6;
  b6.pool = 1;
  m.model = attach_branches(std::move(bb.network), 10, {b3, b6}, 5);
  return m;
}

BranchTrainingOptions branch_options(std::size_t epochs, std::uint64_t seed) {
  BranchTrainingOptions o;
  o.optimizer = adam_optimizer(1e-3);
  o.epochs = epochs;
  o.dropout_seed = seed;
  return o;
}

Outcome frozen_backbone() {
  Check c;
  DeskModel m = desk_model(15);
  const auto before = serialize_network(m.model.backbone);
  const auto final_before = evaluate_exit(m.model, kFinalExit, m.splits.test).predictions;
  std::vector<std::string> accs;
  std::size_t k = 0;
  for (std::size_t loc : m.model.locations()) {
    const ParameterStore init = m.model.branch(loc).net.params;
    auto stream = ScheduleStream::vanilla(m.splits.train.size(), 32, 20, 100 + k);
    train_branch(m.model, loc, m.splits.train, m.splits.validation, stream, branch_options(20, 200 + k));
    c.require(!m.model.branch(loc).net.params.same_values(init), "branch " + std::to_string(loc) + " did not train");
    accs.push_back("L" + std::to_string(loc) + " " + num(100 * evaluate_exit(m.model, loc, m.splits.test).accuracy, "%.2f") + "%");
    ++k;
  }
  const auto after = serialize_network(m.model.backbone);
  c.require(after == before, "backbone checkpoint bytes changed");
  c.require(evaluate_exit(m.model, kFinalExit, m.splits.test).predictions == final_before,
            "final-exit test predictions changed");
  if (c.ok()) {
    c.out.detail = "2 branches x 20 epochs (" + accs[0] + ", " + accs[1] + "), " + std::to_string(before.size()) +
                   " backbone bytes identical, " + std::to_string(final_before.size()) + " final predictions identical";
  }
  return c.out;
}

// --- sampler uniformity -----------------------------------------------------

Outcome sampler_uniformity() {
  Check c;
  constexpr std::size_t n = 100, b = 10;
  constexpr double critical = 74.919474;  // chi-square 0.99 quantile, 49 dof
  Rng perm_rng(3);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  perm_rng.shuffle(perm);
  std::vector<std::size_t> position(n);
  for (std::size_t i = 0; i < n; ++i) position[perm[i]] = i;

  // Paced stream with lambda = 0.5 throughout: 1000 batches of 10.
  const PacingFunction half(PacingConfig::single_step(0.5, 1u << 30));
  auto stream = ScheduleStream::paced(perm, half, b, 100, 17);
  std::vector<double> counts(50, 0.0);
  std::size_t draws = 0, outside = 0;
  while (auto batch = stream.next()) {
    for (std::size_t i : *batch) {
      ++draws;
      if (position[i] >= 50) ++outside;
      else counts[position[i]] += 1;
    }
  }
  auto chi2 = [](const std::vector<double>& cs, double expect) {
    double s = 0.0;
    for (double x : cs) s += (x - expect) * (x - expect) / expect;
    return s;
  };
  const double stream_chi2 = chi2(counts, static_cast<double>(draws) / 50.0);
  c.require(draws == 10000, "stream produced " + std::to_string(draws) + " draws");
  c.require(outside == 0, std::to_string(outside) + " draws outside the prefix");
  c.require(stream_chi2 < critical, "stream chi-square " + num(stream_chi2) + " >= " + num(critical));

  // Independent batches from the same prefix range.
  Rng rng(18);
  std::vector<double> direct(50, 0.0);
  for (int k = 0; k < 1000; ++k) {
    for (std::size_t pos : sample_batch(active_range(half, 0, n, b), b, rng)) {
      if (pos >= 50) ++outside;
      else direct[pos] += 1;
    }
  }
  const double direct_chi2 = chi2(direct, 200.0);
  c.require(outside == 0, std::to_string(outside) + " sampled positions outside the prefix");
  c.require(direct_chi2 < critical, "sample_batch chi-square " + num(direct_chi2) + " >= " + num(critical));
  if (c.ok()) {
    c.out.detail = "10000 draws, 0 outside [0,50); chi2 stream " + num(stream_chi2) + ", per-batch sampler " +
                   num(direct_chi2) + " < " + num(critical) + " (alpha 0.01, 49 dof)";
  }
  return c.out;
}

// --- entropy policy boundaries ------------------------------------------------

Outcome entropy_boundaries() {
  Check c;
  DeskModel m = desk_model(10);
  std::size_t k = 0;
  for (std::size_t loc : m.model.locations()) {
    auto stream = ScheduleStream::vanilla(m.splits.train.size(), 32, 10, 300 + k);
    train_branch(m.model, loc, m.splits.train, m.splits.validation, stream, branch_options(10, 400 + k));
    ++k;
  }
  const Tensor& x = m.splits.test.inputs;
  const std::size_t n = m.splits.test.size();
  const std::size_t first = m.model.locations().front();
  std::size_t at_first = 0, early = 0;
  for (const auto& r : infer_with_policy(m.model, x, ExitPolicy{std::numeric_limits<double>::infinity()}))
    at_first += r.exit == first;
  for (const auto& r : infer_with_policy(m.model, x, ExitPolicy{0.0})) early += r.exit != kFinalExit;
  c.require(at_first == n, "threshold +inf: " + std::to_string(at_first) + "/" + std::to_string(n) + " first-branch exits");
  c.require(early == 0, "threshold 0: " + std::to_string(early) + " early exits");
  if (c.ok()) {
    c.out.detail = "+inf: " + std::to_string(at_first) + "/" + std::to_string(n) + " exit at layer " +
                   std::to_string(first) + "; 0: 0/" + std::to_string(n) + " early exits (branch test acc " +
                   num(100 * evaluate_exit(m.model, first, m.splits.test).accuracy, "%.2f") + "%)";
  }
  return c.out;
}

// --- protocol regression ------------------------------------------------------

const char* kResultFiles[] = {"results.csv", "results.txt", "raw.csv", "search.csv"};

struct ProtocolRun {
  RunResult result;
  double seconds = 0.0;
};

ProtocolRun run_grid(const ExperimentConfig& cfg, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  Experiment ex = prepare_experiment(cfg);
  ProtocolRun r{run_protocol(ex), 0.0};
  emit_results(r.result, out);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
  return f;
}

Outcome protocol_regression() {
  Check c;
  const fs::path config_path = source_dir() / "tests" / "data" / "protocol_config.json";
  const fs::path reference = source_dir() / "tests" / "data" / "protocol_reference";
  ExperimentConfig cfg = load_config(config_path);
  c.require(cfg.dataset.synthetic.samples == 2000 && cfg.repetitions == 5 && cfg.pacing_grid == default_pacing_grid() &&
                cfg.strategies.size() == 4 && cfg.dataset.synthetic.hard_fraction > 0.0,
            "protocol config is not the N=2000, R=5, default-grid, four-strategy setup");

  cfg.threads = 1;
  const fs::path a = work_dir("protocol_a");
  const ProtocolRun first = run_grid(cfg, a);
  c.require(first.seconds < 600.0, "run took " + num(first.seconds) + " s (budget 600 s)");

  // Table shape.
  std::istringstream csv(slurp(a / "results.csv"));
  std::string header;
  std::getline(csv, header);
  c.require(header == "backbone,dataset,branch,vanilla,curriculum,anti,random,optimizer,lr,teacher,pacing",
            "results.csv header: " + header);
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) {
    ++rows;
    const auto f = split_csv(line);
    c.require(f.size() == 11, "results.csv row with " + std::to_string(f.size()) + " fields");
    for (int i = 3; i < 7 && f.size() == 11; ++i)
      c.require(f[i].find("%\xC2\xB1") != std::string::npos, "accuracy cell '" + f[i] + "' is not mean%±std");
    if (f.size() == 11) {
      c.require(f[10].rfind("FEP(", 0) == 0 || f[10].rfind("SSP(", 0) == 0, "pacing cell '" + f[10] + "'");
    }
  }
  c.require(rows == cfg.branches.size(), "results.csv has " + std::to_string(rows) + " rows");

  // Shared initialization, strategy isolation, aggregation.
  std::map<std::pair<std::size_t, std::size_t>, std::set<std::string>> inits;
  std::istringstream raw(slurp(a / "raw.csv"));
  std::string line;
  std::getline(raw, line);
  std::size_t raw_rows = 0;
  while (std::getline(raw, line)) {
    const auto f = split_csv(line);
    if (f.size() != 6) continue;
    ++raw_rows;
    inits[{std::stoul(f[0]), std::stoul(f[3])}].insert(f[5]);
  }
  c.require(raw_rows == cfg.branches.size() * 4 * cfg.repetitions, "raw.csv has " + std::to_string(raw_rows) + " rows");
  for (const auto& [key, hashes] : inits)
    c.require(hashes.size() == 1, "branch " + std::to_string(key.first) + " repetition " + std::to_string(key.second) +
                                      ": strategies start from different parameters");
  c.require(first.result.backbone_hash_before == first.result.backbone_hash_after, "backbone hash changed");
  const auto records = read_raw_csv(a / "raw.csv");
  for (const BranchResult& br : first.result.branches) {
    for (const auto& [s, cell] : br.cells) {
      std::vector<double> acc;
      for (const auto& r : records)
        if (r.branch == br.number && r.strategy == to_string(s)) acc.push_back(r.accuracy);
      c.require(acc.size() == cfg.repetitions, "raw accuracies missing");
      if (acc.size() != cfg.repetitions) continue;
      const Summary sm = summarize(acc);
      c.require(std::abs(sm.mean - cell.mean) <= 1e-12 && std::abs(sm.std - cell.std) <= 1e-12,
                "aggregate differs from raw recomputation");
      const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
      c.require(cell.mean >= *lo && cell.mean <= *hi, "mean outside [min,max]");
    }
  }

  // Determinism under parallel execution.
  cfg.threads = 2;
  const fs::path b = work_dir("protocol_b");
  const ProtocolRun second = run_grid(cfg, b);
  for (const char* f : kResultFiles) c.require(slurp(a / f) == slurp(b / f), std::string(f) + " differs between 1 and 2 threads");

  // Pinned reference.
  std::size_t matched = 0;
  for (const char* f : kResultFiles) {
    const std::string ref = slurp(reference / f);
    c.require(!ref.empty(), std::string("reference ") + f + " is missing");
    c.require(ref == slurp(a / f), std::string(f) + " differs from the pinned reference");
    matched += !ref.empty() && ref == slurp(a / f);
  }
  if (c.ok()) {
    c.out.detail = "runs " + num(first.seconds, "%.1f") + " s (1 thread) and " + num(second.seconds, "%.1f") +
                   " s (2 threads), budget 600 s; " + std::to_string(matched) +
                   " files bit-identical to the reference and across thread counts";
    fs::remove_all(a);
    fs::remove_all(b);
  }
  return c.out;
}

// --- CIFAR subset smoke -------------------------------------------------------

Outcome cifar_smoke() {
  const char* dir = std::getenv("MEXIT_CIFAR10_DIR");
  if (!dir || !*dir) return {Status::skip, "MEXIT_CIFAR10_DIR is not set (needs the CIFAR-10 binary batches)"};
  const fs::path batch = fs::path(dir) / "data_batch_1.bin";
  if (!fs::exists(batch)) return {Status::skip, batch.string() + " not found"};
  Check c;
  ExperimentConfig cfg;
  cfg.name = "cifar10-5k";
  cfg.dataset.kind = "cifar10";
  cfg.dataset.paths = {batch.string()};
  cfg.dataset.max_records = 5000;
  cfg.split = SplitSpec{0.6, 0.15, 0.15, 0.1, 1};
  cfg.backbone.epochs = 10;
  BranchSpec b;
  b.location = 3;
  cfg.branches = {b};
  cfg.optimizer_grid.kinds = {OptimizerKind::adam};
  cfg.optimizer_grid.learning_rates = {1e-3};
  cfg.epochs = 10;
  cfg.search_epochs = 3;
  cfg.repetitions = 1;
  const auto t0 = std::chrono::steady_clock::now();
  Experiment ex = prepare_experiment(cfg);
  c.require(ex.splits.train.size() + ex.splits.validation.size() + ex.splits.test.size() + ex.splits.hyper.size() == 5000,
            "subset is not 5000 samples");
  RunResult r = run_protocol(ex);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.require(secs < 900.0, "took " + num(secs) + " s (budget 900 s)");
  c.require(r.backbone_hash_before == r.backbone_hash_after, "backbone changed");
  // One-sided binomial bound: above 10% by 2.33 sigma at the test-split size.
  const double n = static_cast<double>(ex.splits.test.size());
  const double bound = 0.1 + 2.33 * std::sqrt(0.09 / n);
  std::set<std::uint64_t> inits;
  std::string accs;
  for (const auto& [s, cell] : r.branches.at(0).cells) {
    inits.insert(cell.repetitions.at(0).initial_hash);
    c.require(cell.mean > bound, std::string(to_string(s)) + " accuracy " + num(cell.mean) + " <= " + num(bound));
    accs += std::string(accs.empty() ? "" : ", ") + std::string(to_string(s)) + " " + num(100 * cell.mean, "%.2f") + "%";
  }
  c.require(inits.size() == 1, "strategies start from different parameters");
  if (c.ok()) c.out.detail = accs + " (chance bound " + num(100 * bound, "%.2f") + "%), " + num(secs, "%.0f") + " s";
  return c.out;
}

struct Criterion {
  const char* name;
  double budget_seconds;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"pacing_exactness", 1.0, pacing_exactness},
    {"monotone_clamp", 5.0, monotone_clamp},
    {"gradient_suite", 30.0, gradient_suite},
    {"degenerate_equivalence", 30.0, degenerate_equivalence},
    {"frozen_backbone", 120.0, frozen_backbone},
    {"sampler_uniformity", 5.0, sampler_uniformity},
    {"entropy_boundaries", 10.0, entropy_boundaries},
    {"protocol_regression", 1200.0, protocol_regression},
    {"cifar_smoke", 900.0, cifar_smoke},
};

Status run_one(const Criterion& cr) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = cr.run();
  } catch (const std::exception& e) {
    o = {Status::fail, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (o.status == Status::pass && secs > cr.budget_seconds) {
    o = {Status::fail, "took " + num(secs, "%.2f") + " s, budget " + num(cr.budget_seconds) + " s"};
  }
  const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
  std::printf("%s %s: %s [%.2f s]\n", tag, cr.name, o.detail.c_str(), secs);
  std::fflush(stdout);
  return o.status;
}

}  // namespace

int main(int argc, char** argv) {
  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--list") {
      for (const auto& cr : kCriteria) std::printf("%s\n", cr.name);
      return 0;
    }
    if (a == "--only" && i + 1 < argc) {
      only = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--list] [--only NAME]\n");
      return 2;
    }
  }
  int failed = 0, skipped = 0, ran = 0;
  for (const auto& cr : kCriteria) {
    if (!only.empty() && only != cr.name) continue;
    ++ran;
    const Status s = run_one(cr);
    failed += s == Status::fail;
    skipped += s == Status::skip;
  }
  if (ran == 0) {
    std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
    return 2;
  }
  if (failed) return 1;
  if (!only.empty() && skipped) return 77;
  return 0;
}
