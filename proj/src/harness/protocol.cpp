#include "mexit/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <thread>

#include "mexit/checkpoint.hpp"
#include "mexit/error.hpp"
#include "mexit/results.hpp"

namespace mexit {

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string lr_label(double lr) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", lr);
  return buf;
}

/// Runs fn(0..n-1) on up to `threads` workers; rethrows the lowest-index failure.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

/// Vanilla fit of a full network on a dataset, monitoring validation accuracy.
void fit_on(Network& net, const Dataset& train, const Dataset& validation, const OptimizerConfig& optimizer,
            std::size_t epochs, std::size_t batch_size, std::uint64_t master, const std::string& role,
            std::uint64_t index) {
  if (epochs == 0) return;
  if (train.size() == 0) throw InvalidArgument(role + ": train split is empty");
  auto stream = ScheduleStream::vanilla(train.size(), std::min(batch_size, train.size()), epochs,
                                        derive_seed(master, role + "-stream", {index}));
  FitOptions opts;
  opts.optimizer = optimizer;
  opts.epochs = epochs;
  opts.dropout_seed = derive_seed(master, role + "-dropout", {index});
  BatchInputs inputs = [&](std::span<const std::size_t> rows) { return gather_rows(train.inputs, rows); };
  Validator validate;
  if (validation.size()) validate = [&](const Network& n) { return accuracy(n, validation.inputs, validation.labels); };
  fit(net, inputs, train.labels, stream, opts, validate);
}

MultiExitModel single_branch_model(const Experiment& ex, Branch branch) {
  MultiExitModel m;
  m.backbone = ex.model.backbone;
  m.classes = ex.model.classes;
  const std::size_t loc = branch.spec.location;
  m.branches.emplace(loc, std::move(branch));
  return m;
}

struct TrainedBranch {
  Branch branch;
  std::uint64_t initial_hash = 0;
};

/// Builds, trains and returns one branch on split taps `train` / `train_labels`.
TrainedBranch train_one(const Experiment& ex, std::size_t location, std::uint64_t init_seed,
                        const Tensor& train_taps, std::span<const std::size_t> train_labels,
                        ScheduleStream stream, const OptimizerConfig& optimizer, std::size_t epochs,
                        std::uint64_t dropout_seed) {
  const TapSet& taps = ex.taps.at(location);
  Branch branch = make_branch(ex.model.backbone, ex.model.classes, ex.branch_spec(location), init_seed);
  TrainedBranch out{Branch{}, network_hash(branch.net)};
  MultiExitModel m = single_branch_model(ex, std::move(branch));
  BranchTrainingOptions opts;
  opts.optimizer = optimizer;
  opts.epochs = epochs;
  opts.dropout_seed = dropout_seed;
  opts.early_stopping_patience = ex.config.early_stopping_patience;
  train_branch_on_taps(m, location, train_taps, train_labels, taps.validation, ex.splits.validation.labels, stream,
                       opts);
  out.branch = std::move(m.branch(location));
  return out;
}

std::size_t batch_for(const ExperimentConfig& c, std::size_t n) { return std::min(c.batch_size, n); }

DifficultyOrder flat_order(std::size_t n) { return DifficultyOrder::from_scores(std::vector<double>(n, 0.0)); }

}  // namespace

Dataset load_dataset(const DatasetSource& source) {
  if (source.kind == "synthetic") return generate_synthetic(source.synthetic);
  std::vector<std::filesystem::path> paths(source.paths.begin(), source.paths.end());
  if (source.kind == "cifar10") return load_cifar_binary(paths, CifarVariant::cifar10, source.max_records);
  if (source.kind == "cifar100") return load_cifar_binary(paths, CifarVariant::cifar100, source.max_records);
  if (source.kind == "text") {
    if (paths.size() != 1) throw InvalidArgument("text dataset takes exactly one path");
    Dataset d = read_text_dataset(paths[0]);
    if (source.max_records && d.size() > source.max_records) {
      d = d.subset(all_rows(source.max_records), d.provenance);
    }
    return d;
  }
  throw InvalidArgument("unknown dataset kind '" + source.kind + "'");
}

PreparedBackbone prepare_backbone(const ExperimentConfig& config, const Splits& splits, const Logger& log) {
  const Dataset& train = splits.train;
  const std::size_t classes = train.classes;
  PreparedBackbone out;
  out.network = make_network(config.backbone.name, train.sample_shape(), config.backbone.layers(classes),
                             derive_seed(config.master_seed, "backbone-init"));
  say(log, "backbone: training " + std::to_string(config.backbone.epochs) + " epochs on " +
               std::to_string(train.size()) + " samples");
  fit_on(out.network, train, splits.validation, config.backbone.optimizer, config.backbone.epochs,
         config.backbone.batch_size, config.master_seed, "backbone", 0);
  out.network.params.freeze_all();
  if (splits.validation.size()) {
    out.validation_accuracy = accuracy(out.network, splits.validation.inputs, splits.validation.labels);
  }
  if (splits.test.size()) out.test_accuracy = accuracy(out.network, splits.test.inputs, splits.test.labels);
  const double chance = 1.0 / static_cast<double>(classes);
  if (!(out.validation_accuracy > chance)) {
    out.warnings.push_back("backbone validation accuracy " + fixed(out.validation_accuracy) +
                           " does not exceed chance " + fixed(chance));
  }
  say(log, "backbone: validation " + fixed(out.validation_accuracy) + ", test " + fixed(out.test_accuracy));
  return out;
}

Network teacher_network(const ExperimentConfig& config, const TeacherSpec& spec, std::size_t teacher_index,
                        const Splits& splits, const Network& backbone) {
  if (spec.kind == "self") return backbone;
  if (spec.kind != "mlp") throw InvalidArgument("teacher kind must be self or mlp, got '" + spec.kind + "'");
  const std::size_t k = splits.train.classes;
  std::vector<LayerSpec> layers{LayerSpec::flatten(),         LayerSpec::dense(spec.hidden), LayerSpec::relu(),
                                LayerSpec::dropout(spec.dropout), LayerSpec::dense(k),       LayerSpec::softmax()};
  Network net = make_network("teacher-" + spec.name, splits.train.sample_shape(), layers,
                             derive_seed(config.master_seed, "teacher-init", {teacher_index}));
  fit_on(net, splits.train, splits.validation, spec.optimizer, spec.epochs, spec.batch_size, config.master_seed,
         "teacher", teacher_index);
  net.params.freeze_all();
  return net;
}

TeacherScores score_teacher(const ExperimentConfig& config, const TeacherSpec& spec, std::size_t teacher_index,
                            const Splits& splits, const Network& backbone) {
  const Network net = teacher_network(config, spec, teacher_index, splits, backbone);
  return TeacherScores{spec.name, score_with_teacher(net, splits.train), score_with_teacher(net, splits.hyper)};
}

TeacherScores teacher_from_scores(const std::string& name, const DifficultyOrder& full, const SplitIndices& rows) {
  auto pick = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> s;
    s.reserve(idx.size());
    for (std::size_t i : idx) {
      if (i >= full.size()) {
        throw InvalidArgument("score file has " + std::to_string(full.size()) + " entries but the dataset has more");
      }
      s.push_back(full.scores[i]);
    }
    return DifficultyOrder::from_scores(std::move(s));
  };
  return TeacherScores{name, pick(rows.train), pick(rows.hyper)};
}

const BranchSpec& Experiment::branch_spec(std::size_t location) const { return model.branch(location).spec; }

const TeacherScores& Experiment::teacher(const std::string& name) const {
  for (const auto& t : teachers)
    if (t.name == name) return t;
  throw InvalidArgument("unknown teacher '" + name + "'");
}

std::size_t Experiment::branch_number(std::size_t location) const {
  std::size_t i = 1;
  for (const auto& [loc, b] : model.branches) {
    if (loc == location) return i;
    ++i;
  }
  throw InvalidArgument("no branch at location " + std::to_string(location));
}

Experiment prepare_experiment(const ExperimentConfig& config, const Logger& log) {
  config.validate();
  Experiment ex;
  ex.config = config;
  Dataset data = load_dataset(config.dataset);
  data.validate();
  say(log, "data: " + std::to_string(data.size()) + " samples, " + std::to_string(data.classes) + " classes, " +
               shape_to_string(data.sample_shape()));
  ex.split_rows = split_indices(data.size(), config.split);
  ex.splits = split(data, config.split);
  if (ex.splits.validation.size() == 0) throw InvalidArgument("validation split is empty");
  if (ex.splits.hyper.size() == 0) throw InvalidArgument("hyper-parameter split is empty; set split.hyper > 0");
  if (ex.splits.test.size() == 0) throw InvalidArgument("test split is empty");

  PreparedBackbone bb = prepare_backbone(config, ex.splits, log);
  ex.backbone_validation_accuracy = bb.validation_accuracy;
  ex.backbone_test_accuracy = bb.test_accuracy;
  ex.warnings = bb.warnings;
  ex.model = attach_branches(std::move(bb.network), data.classes, config.branches,
                             derive_seed(config.master_seed, "attach"));

  for (std::size_t i = 0; i < config.teachers.size(); ++i) {
    say(log, "teacher " + config.teachers[i].name + ": scoring");
    ex.teachers.push_back(score_teacher(config, config.teachers[i], i, ex.splits, ex.model.backbone));
  }
  for (std::size_t loc : ex.model.locations()) {
    TapSet t;
    t.train = tap_activations(ex.model, ex.splits.train.inputs, loc);
    t.validation = tap_activations(ex.model, ex.splits.validation.inputs, loc);
    t.test = tap_activations(ex.model, ex.splits.test.inputs, loc);
    t.hyper = tap_activations(ex.model, ex.splits.hyper.inputs, loc);
    ex.taps.emplace(loc, std::move(t));
  }
  return ex;
}

OptimizerConfig OptimizerChoice::config(const PlateauPolicy& plateau) const {
  OptimizerConfig c;
  c.kind = kind;
  c.learning_rate = learning_rate;
  c.plateau = plateau;
  return c;
}

OptimizerChoice select_vanilla_optimizer(const Experiment& ex, std::size_t location) {
  const ExperimentConfig& cfg = ex.config;
  struct Cell {
    OptimizerKind kind;
    double lr;
  };
  std::vector<Cell> cells;
  for (OptimizerKind k : cfg.optimizer_grid.kinds)
    for (double lr : cfg.optimizer_grid.learning_rates) cells.push_back({k, lr});
  if (cells.empty()) throw InvalidArgument("optimizer grid is empty");

  const TapSet& taps = ex.taps.at(location);
  const Dataset& hyper = ex.splits.hyper;
  const std::size_t b = batch_for(cfg, hyper.size());
  const std::size_t epochs = cfg.effective_search_epochs();
  std::vector<double> acc(cells.size());
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    OptimizerChoice probe;
    probe.kind = cells[i].kind;
    probe.learning_rate = cells[i].lr;
    auto stream =
        ScheduleStream::vanilla(hyper.size(), b, epochs, derive_seed(cfg.master_seed, "search-stream", {location}));
    auto trained = train_one(ex, location, derive_seed(cfg.master_seed, "search-init", {location}), taps.hyper,
                             hyper.labels, std::move(stream), probe.config(cfg.optimizer_grid.plateau), epochs,
                             derive_seed(cfg.master_seed, "search-dropout", {location}));
    acc[i] = accuracy(trained.branch.net, taps.validation, ex.splits.validation.labels);
  });

  OptimizerChoice best;
  std::size_t bi = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    best.candidates.push_back({"optimizer", std::string(to_string(cells[i].kind)) + "@" + lr_label(cells[i].lr), acc[i]});
    if (i == 0) continue;
    const Cell& c = cells[i];
    const Cell& w = cells[bi];
    const bool better = acc[i] > acc[bi] ||
                        (acc[i] == acc[bi] && (c.lr < w.lr || (c.lr == w.lr && c.kind == OptimizerKind::sgd &&
                                                               w.kind == OptimizerKind::adam)));
    if (better) bi = i;
  }
  best.kind = cells[bi].kind;
  best.learning_rate = cells[bi].lr;
  best.validation_accuracy = acc[bi];
  return best;
}

std::map<StrategyKind, PacingChoice> grid_search_pacing(const Experiment& ex, std::size_t location,
                                                        const OptimizerChoice& optimizer) {
  const ExperimentConfig& cfg = ex.config;
  const TapSet& taps = ex.taps.at(location);
  const Dataset& hyper = ex.splits.hyper;
  const std::size_t b = batch_for(cfg, hyper.size());
  const std::size_t epochs = cfg.effective_search_epochs();
  const DifficultyOrder flat = flat_order(hyper.size());

  struct Cell {
    StrategyKind strategy;
    std::string teacher;
    const DifficultyOrder* order;
    PacingConfig pacing;
  };
  std::vector<Cell> cells;
  for (StrategyKind s : cfg.strategies) {
    if (s == StrategyKind::vanilla) continue;
    if (s == StrategyKind::random_curriculum) {
      for (const auto& p : cfg.pacing_grid) cells.push_back({s, "-", &flat, p});
      continue;
    }
    if (ex.teachers.empty()) {
      throw InvalidArgument(std::string(to_string(s)) + " needs a teacher; configure one or supply a score file");
    }
    for (const auto& t : ex.teachers)
      for (const auto& p : cfg.pacing_grid) cells.push_back({s, t.name, &t.hyper, p});
  }

  std::vector<double> acc(cells.size());
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    const Cell& c = cells[i];
    auto perm = order_for_strategy(*c.order, c.strategy, derive_seed(cfg.master_seed, "search-random-order", {location}));
    auto stream = ScheduleStream::paced(std::move(perm), PacingFunction(c.pacing), b, epochs,
                                        derive_seed(cfg.master_seed, "search-stream", {location}));
    auto trained = train_one(ex, location, derive_seed(cfg.master_seed, "search-init", {location}), taps.hyper,
                             hyper.labels, std::move(stream), optimizer.config(cfg.optimizer_grid.plateau), epochs,
                             derive_seed(cfg.master_seed, "search-dropout", {location}));
    acc[i] = accuracy(trained.branch.net, taps.validation, ex.splits.validation.labels);
  });

  std::map<StrategyKind, PacingChoice> out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    const std::string label = PacingFunction(c.pacing).label();
    auto [it, fresh] = out.try_emplace(c.strategy, PacingChoice{c.teacher, c.pacing, acc[i], {}});
    PacingChoice& choice = it->second;
    choice.candidates.push_back({std::string(to_string(c.strategy)), c.teacher + "/" + label, acc[i]});
    if (!fresh && acc[i] > choice.validation_accuracy) {
      choice.teacher = c.teacher;
      choice.pacing = c.pacing;
      choice.validation_accuracy = acc[i];
    }
  }
  return out;
}

std::vector<double> CellResult::accuracies() const {
  std::vector<double> out;
  for (const auto& r : repetitions) out.push_back(r.test_accuracy);
  return out;
}

RepetitionResult run_repetition(const Experiment& ex, std::size_t location, StrategyKind strategy,
                                const OptimizerChoice& optimizer, const std::optional<PacingChoice>& pacing,
                                std::size_t repetition, Branch* trained) {
  const ExperimentConfig& cfg = ex.config;
  const std::uint64_t m = cfg.master_seed;
  const TapSet& taps = ex.taps.at(location);
  const Dataset& train = ex.splits.train;
  const std::size_t b = batch_for(cfg, train.size());
  const std::uint64_t stream_seed = derive_seed(m, "branch-stream", {location, repetition});

  std::optional<ScheduleStream> stream;
  if (strategy == StrategyKind::vanilla) {
    stream = ScheduleStream::vanilla(train.size(), b, cfg.epochs, stream_seed);
  } else {
    if (!pacing) throw InvalidArgument(std::string(to_string(strategy)) + " needs a pacing choice");
    const DifficultyOrder flat = flat_order(train.size());
    const DifficultyOrder& order =
        strategy == StrategyKind::random_curriculum ? flat : ex.teacher(pacing->teacher).train;
    auto perm = order_for_strategy(order, strategy, derive_seed(m, "random-order", {location, repetition}));
    stream = ScheduleStream::paced(std::move(perm), PacingFunction(pacing->pacing), b, cfg.epochs, stream_seed);
  }
  auto result = train_one(ex, location, derive_seed(m, "branch-init", {location, repetition}), taps.train,
                          train.labels, std::move(*stream), optimizer.config(cfg.optimizer_grid.plateau), cfg.epochs,
                          derive_seed(m, "branch-dropout", {location, repetition}));
  RepetitionResult r;
  r.initial_hash = result.initial_hash;
  r.final_hash = network_hash(result.branch.net);
  r.test_accuracy = accuracy(result.branch.net, taps.test, ex.splits.test.labels);
  if (trained) *trained = std::move(result.branch);
  return r;
}

namespace {

void finish_cell(CellResult& cell) {
  const auto acc = cell.accuracies();
  const Summary s = summarize(acc);
  cell.mean = s.mean;
  cell.std = s.std;
}

}  // namespace

CellResult run_cell(const Experiment& ex, std::size_t location, StrategyKind strategy, const OptimizerChoice& optimizer,
                    const std::optional<PacingChoice>& pacing) {
  CellResult cell;
  cell.location = location;
  cell.strategy = strategy;
  cell.repetitions.resize(ex.config.repetitions);
  Branch first;
  parallel_for(ex.config.repetitions, ex.config.threads, [&](std::size_t rep) {
    cell.repetitions[rep] = run_repetition(ex, location, strategy, optimizer, pacing, rep, rep == 0 ? &first : nullptr);
  });
  cell.first_branch = std::move(first);
  finish_cell(cell);
  return cell;
}

RunResult run_protocol(Experiment& ex, const Logger& log) {
  const ExperimentConfig& cfg = ex.config;
  RunResult result;
  result.backbone = cfg.backbone.name;
  result.dataset = cfg.name;
  result.backbone_validation_accuracy = ex.backbone_validation_accuracy;
  result.backbone_test_accuracy = ex.backbone_test_accuracy;
  result.strategies = cfg.strategies;
  result.warnings = ex.warnings;
  result.backbone_hash_before = network_hash(ex.model.backbone);

  for (std::size_t loc : ex.model.locations()) {
    BranchResult br;
    br.location = loc;
    br.number = ex.branch_number(loc);
    const std::string tag = "branch " + std::to_string(br.number) + " (layer " + std::to_string(loc) + ")";
    say(log, tag + ": optimizer sweep");
    br.optimizer = select_vanilla_optimizer(ex, loc);
    say(log, tag + ": selected " + std::string(to_string(br.optimizer.kind)) + " lr " +
                 lr_label(br.optimizer.learning_rate) + " (validation " + fixed(br.optimizer.validation_accuracy) +
                 ")");
    say(log, tag + ": pacing grid");
    br.pacing = grid_search_pacing(ex, loc, br.optimizer);
    for (const auto& [s, p] : br.pacing) {
      say(log, tag + ": " + std::string(to_string(s)) + " selected " + p.teacher + "/" + p.pacing_label() +
                   " (validation " + fixed(p.validation_accuracy) + ")");
    }

    const std::size_t reps = cfg.repetitions;
    const std::size_t n = cfg.strategies.size() * reps;
    std::vector<RepetitionResult> runs(n);
    std::vector<Branch> firsts(cfg.strategies.size());
    say(log, tag + ": " + std::to_string(n) + " runs");
    parallel_for(n, cfg.threads, [&](std::size_t i) {
      const std::size_t si = i / reps;
      const std::size_t rep = i % reps;
      const StrategyKind s = cfg.strategies[si];
      std::optional<PacingChoice> pc;
      if (auto it = br.pacing.find(s); it != br.pacing.end()) pc = it->second;
      runs[i] = run_repetition(ex, loc, s, br.optimizer, pc, rep, rep == 0 ? &firsts[si] : nullptr);
    });
    for (std::size_t si = 0; si < cfg.strategies.size(); ++si) {
      CellResult cell;
      cell.location = loc;
      cell.strategy = cfg.strategies[si];
      cell.repetitions.assign(runs.begin() + static_cast<std::ptrdiff_t>(si * reps),
                              runs.begin() + static_cast<std::ptrdiff_t>((si + 1) * reps));
      cell.first_branch = std::move(firsts[si]);
      finish_cell(cell);
      say(log, tag + ": " + std::string(to_string(cell.strategy)) + " " + format_accuracy(cell.accuracies()));
      br.cells.emplace(cell.strategy, std::move(cell));
    }
    result.branches.push_back(std::move(br));
  }
  result.backbone_hash_after = network_hash(ex.model.backbone);
  if (result.backbone_hash_after != result.backbone_hash_before) {
    throw ContractViolation("backbone parameters changed during the experiment");
  }
  return result;
}

MultiExitModel trained_model(const Experiment& ex, const RunResult& result, StrategyKind strategy) {
  MultiExitModel m;
  m.backbone = ex.model.backbone;
  m.classes = ex.model.classes;
  for (const BranchResult& br : result.branches) {
    auto it = br.cells.find(strategy);
    if (it == br.cells.end()) it = br.cells.find(result.strategies.front());
    if (it == br.cells.end() || !it->second.first_branch) {
      throw InvalidArgument("no trained branch at location " + std::to_string(br.location));
    }
    m.branches.emplace(br.location, *it->second.first_branch);
  }
  return m;
}

std::uint64_t network_hash(const Network& net) {
  const auto bytes = serialize_network(net);
  return fnv1a(bytes);
}

}  // namespace mexit
