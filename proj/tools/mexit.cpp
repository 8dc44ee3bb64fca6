#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mexit/config.hpp"
#include "mexit/error.hpp"
#include "mexit/protocol.hpp"
#include "mexit/results.hpp"

using namespace mexit;

namespace {

std::string default_output_dir() {
  const char* env = std::getenv("MEXIT_OUTPUT_DIR");
  return env && *env ? env : "mexit-out";
}

void fail_line(const std::string& code, const std::string& message) {
  nlohmann::json j{{"code", code}, {"message", message}};
  std::cerr << "error: " << j.dump() << '\n';
}

Logger stderr_logger(bool quiet) {
  if (quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

void write_file_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

void add_score_files(Experiment& ex, const std::vector<std::string>& files) {
  for (std::size_t i = 0; i < files.size(); ++i) {
    DifficultyOrder full = read_score_file(files[i]);
    const std::size_t n = ex.splits.train.size() + ex.splits.validation.size() + ex.splits.test.size() +
                          ex.splits.hyper.size();
    if (full.size() != n) {
      throw InvalidArgument("score file '" + files[i] + "' has " + std::to_string(full.size()) +
                            " entries, dataset has " + std::to_string(n));
    }
    const std::string name = files.size() == 1 ? "file" : "file" + std::to_string(i + 1);
    ex.teachers.push_back(teacher_from_scores(name, full, ex.split_rows));
  }
}

struct Common {
  std::string config;
  std::string out = default_output_dir();
  std::vector<std::string> scores;
  std::optional<std::size_t> threads;
  bool quiet = false;
};

ExperimentConfig load_with_overrides(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.threads) cfg.threads = *c.threads;
  return cfg;
}

int cmd_score(const Common& c, const std::string& teacher_name) {
  const ExperimentConfig cfg = load_with_overrides(c);
  Dataset data = load_dataset(cfg.dataset);
  data.validate();
  const Splits splits = split(data, cfg.split);
  std::size_t index = cfg.teachers.size();
  for (std::size_t i = 0; i < cfg.teachers.size(); ++i)
    if (cfg.teachers[i].name == teacher_name) index = i;
  if (index == cfg.teachers.size()) throw InvalidArgument("no teacher named '" + teacher_name + "' in config");
  const TeacherSpec& spec = cfg.teachers[index];
  Network backbone;
  if (spec.kind == "self") backbone = prepare_backbone(cfg, splits, stderr_logger(c.quiet)).network;
  const Network net = teacher_network(cfg, spec, index, splits, backbone);
  const DifficultyOrder order = score_with_teacher(net, data);
  const std::filesystem::path path = std::filesystem::path(c.out) / ("scores-" + spec.name + ".csv");
  std::filesystem::create_directories(path.parent_path());
  write_score_file(path, order);
  std::cout << path.string() << '\n';
  return 0;
}

int cmd_train(const Common& c, std::size_t location, const std::string& strategy_name,
              const std::optional<std::string>& optimizer, const std::optional<double>& lr,
              const std::optional<std::string>& teacher, const std::optional<std::size_t>& pacing_index,
              const std::optional<std::size_t>& repetitions) {
  ExperimentConfig cfg = load_with_overrides(c);
  if (repetitions) cfg.repetitions = *repetitions;
  const StrategyKind strategy = strategy_kind_from_string(strategy_name);
  const Logger log = stderr_logger(c.quiet);
  Experiment ex = prepare_experiment(cfg, log);
  add_score_files(ex, c.scores);
  ex.branch_spec(location);

  OptimizerChoice opt;
  if (optimizer || lr) {
    if (!optimizer || !lr) throw InvalidArgument("--optimizer and --lr go together");
    opt.kind = optimizer_kind_from_string(*optimizer);
    opt.learning_rate = *lr;
  } else {
    opt = select_vanilla_optimizer(ex, location);
  }

  std::optional<PacingChoice> pacing;
  if (strategy != StrategyKind::vanilla) {
    if (pacing_index) {
      if (*pacing_index >= cfg.pacing_grid.size()) throw InvalidArgument("--pacing-index past the pacing grid");
      PacingChoice p;
      p.pacing = cfg.pacing_grid[*pacing_index];
      if (strategy == StrategyKind::random_curriculum) {
        p.teacher = "-";
      } else {
        if (!teacher && ex.teachers.empty()) throw InvalidArgument("no teacher available");
        p.teacher = teacher ? *teacher : ex.teachers.front().name;
        ex.teacher(p.teacher);
      }
      pacing = p;
    } else {
      ExperimentConfig narrowed = ex.config;
      ex.config.strategies = {strategy};
      if (teacher) {
        std::vector<TeacherScores> keep{ex.teacher(*teacher)};
        ex.teachers = keep;
      }
      pacing = grid_search_pacing(ex, location, opt).at(strategy);
      ex.config = narrowed;
    }
  }

  const CellResult cell = run_cell(ex, location, strategy, opt, pacing);
  std::ostringstream raw;
  raw << "repetition,accuracy\n";
  const auto acc = cell.accuracies();
  for (std::size_t i = 0; i < acc.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", acc[i]);
    raw << i << ',' << buf << '\n';
  }
  const std::filesystem::path dir(c.out);
  write_file_text(dir / "cell.csv", raw.str());
  MultiExitModel model;
  model.backbone = ex.model.backbone;
  model.classes = ex.model.classes;
  model.branches.emplace(location, *cell.first_branch);
  save_model(dir / "model.ckpt", model);

  char lrbuf[32];
  std::snprintf(lrbuf, sizeof lrbuf, "%g", opt.learning_rate);
  std::cout << "strategy=" << to_string(strategy) << " location=" << location << " optimizer=" << to_string(opt.kind)
            << " lr=" << lrbuf;
  if (pacing) std::cout << " teacher=" << pacing->teacher << " pacing=" << pacing->pacing_label();
  std::cout << " accuracy=" << format_accuracy(acc) << '\n';
  return 0;
}

int cmd_grid(const Common& c, const std::string& model_strategy) {
  const ExperimentConfig cfg = load_with_overrides(c);
  const Logger log = stderr_logger(c.quiet);
  Experiment ex = prepare_experiment(cfg, log);
  add_score_files(ex, c.scores);
  const RunResult result = run_protocol(ex, log);
  const std::filesystem::path dir(c.out);
  emit_results(result, dir);
  write_file_text(dir / "config.json", config_to_json(cfg) + "\n");
  save_model(dir / "model.ckpt", trained_model(ex, result, strategy_kind_from_string(model_strategy)));
  std::cout << results_text(result);
  return 0;
}

Dataset dataset_for_eval(const Common& c, const std::string& data_path, const std::string& which) {
  if (!data_path.empty()) return read_text_dataset(data_path);
  if (c.config.empty()) throw InvalidArgument("eval needs --config or --data");
  const ExperimentConfig cfg = load_config(c.config);
  Dataset data = load_dataset(cfg.dataset);
  if (which == "all") return data;
  Splits s = split(data, cfg.split);
  if (which == "train") return s.train;
  if (which == "validation") return s.validation;
  if (which == "test") return s.test;
  if (which == "hyper") return s.hyper;
  throw InvalidArgument("--split must be train, validation, test, hyper or all");
}

int cmd_eval(const Common& c, const std::string& model_path, const std::string& data_path, const std::string& which) {
  const MultiExitModel model = load_model(model_path);
  const Dataset data = dataset_for_eval(c, data_path, which);
  std::cout << "exit,accuracy,mean_loss\n";
  auto row = [&](std::size_t exit) {
    const ExitEvaluation ev = evaluate_exit(model, exit, data);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", ev.accuracy, ev.mean_loss);
    std::cout << (exit == kFinalExit ? std::string("final") : std::to_string(exit)) << ',' << buf << '\n';
  };
  for (std::size_t loc : model.locations()) row(loc);
  row(kFinalExit);
  return 0;
}

int cmd_pacing_dump(const Common& c, std::optional<std::size_t> index, PacingConfig pc, bool kind_given,
                    std::size_t t_end, const std::string& out_path) {
  if (!kind_given) {
    if (c.config.empty()) throw InvalidArgument("pacing-dump needs --kind or --config");
    const ExperimentConfig cfg = load_config(c.config);
    const std::size_t i = index.value_or(0);
    if (i >= cfg.pacing_grid.size()) throw InvalidArgument("--index past the pacing grid");
    pc = cfg.pacing_grid[i];
  }
  const PacingFunction f(pc);
  if (out_path.empty()) {
    write_pacing_curve(std::cout, f, t_end);
  } else {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write '" + out_path + "'");
    write_pacing_curve(out, f, t_end);
  }
  return 0;
}

int cmd_infer(const std::string& model_path, const std::string& input, const std::string& threshold) {
  const MultiExitModel model = load_model(model_path);
  ExitPolicy policy;
  policy.threshold = threshold == "inf" ? std::numeric_limits<double>::infinity() : std::stod(threshold);
  const Dataset data = read_text_dataset(input);
  const auto out = infer_with_policy(model, data.inputs, policy);
  std::cout << "index,class,exit,entropy\n";
  for (std::size_t i = 0; i < out.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", out[i].entropy);
    std::cout << i << ',' << out[i].predicted << ','
              << (out[i].exit == kFinalExit ? std::string("final") : std::to_string(out[i].exit)) << ',' << buf
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curriculum training of early-exit branches on a frozen backbone"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("-c,--config", common.config, "experiment config (JSON)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", common.out, "output directory (default $MEXIT_OUTPUT_DIR or ./mexit-out)");
    sub->add_flag("-q,--quiet", common.quiet, "no progress messages");
  };

  auto* score = app.add_subcommand("score", "train a teacher and write per-sample difficulty scores");
  add_common(score, true);
  std::string teacher_name = "self";
  score->add_option("--teacher", teacher_name, "teacher name from the config");

  auto* train = app.add_subcommand("train", "run one (branch, strategy) cell over all repetitions");
  add_common(train, true);
  std::size_t location = 0;
  std::string strategy = "vanilla";
  std::optional<std::string> optimizer, teacher;
  std::optional<double> lr;
  std::optional<std::size_t> pacing_index, repetitions;
  train->add_option("--branch", location, "branch location (backbone layer index)")->required();
  train->add_option("--strategy", strategy, "vanilla | curriculum | anti | random");
  train->add_option("--optimizer", optimizer, "sgd | adam (skips the optimizer sweep)");
  train->add_option("--lr", lr, "learning rate (with --optimizer)");
  train->add_option("--teacher", teacher, "teacher name");
  train->add_option("--pacing-index", pacing_index, "pacing grid entry (skips the pacing search)");
  train->add_option("--repetitions", repetitions, "override repetitions");
  train->add_option("--scores", common.scores, "difficulty score file(s) used as teachers");
  train->add_option("--threads", common.threads, "worker threads");

  auto* grid = app.add_subcommand("grid", "full protocol: optimizer sweep, pacing grid, repeated runs");
  add_common(grid, true);
  std::string model_strategy = "curriculum";
  grid->add_option("--scores", common.scores, "difficulty score file(s) used as teachers");
  grid->add_option("--threads", common.threads, "worker threads");
  grid->add_option("--model-strategy", model_strategy, "strategy whose repetition-0 branches go into model.ckpt");

  auto* eval = app.add_subcommand("eval", "accuracy of every exit of a checkpoint");
  add_common(eval, false);
  std::string model_path, data_path, which = "test";
  eval->add_option("-m,--model", model_path, "model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_path, "text dataset (instead of the config's data)");
  eval->add_option("--split", which, "train | validation | test | hyper | all");

  auto* dump = app.add_subcommand("pacing-dump", "write the t,lambda curve of a pacing function");
  add_common(dump, false);
  PacingConfig pc;
  std::string kind;
  std::optional<std::size_t> index;
  std::size_t t_end = 3000;
  std::string dump_out;
  dump->add_option("--kind", kind, "pacing kind (overrides --config)");
  dump->add_option("--index", index, "pacing grid entry of --config");
  dump->add_option("--start", pc.start, "lambda_0 / s");
  dump->add_option("--full-at", pc.full_at, "T_f");
  dump->add_option("--exponent", pc.exponent, "p");
  dump->add_option("--growth", pc.growth, "r");
  dump->add_option("--step", pc.step, "delta");
  dump->add_option("--buckets", pc.buckets, "B");
  dump->add_option("--t-end", t_end, "number of batch indices");
  dump->add_option("--file", dump_out, "write to a file instead of stdout");

  auto* infer = app.add_subcommand("infer", "entropy-threshold early-exit inference");
  std::string infer_model, infer_input, threshold = "inf";
  infer->add_option("-m,--model", infer_model, "model checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("-i,--input", infer_input, "text dataset of inputs")->required()->check(CLI::ExistingFile);
  infer->add_option("-t,--threshold", threshold, "entropy threshold in nats, or inf");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail_line("usage", e.what());
    return 2;
  }

  try {
    if (*score) return cmd_score(common, teacher_name);
    if (*train) return cmd_train(common, location, strategy, optimizer, lr, teacher, pacing_index, repetitions);
    if (*grid) return cmd_grid(common, model_strategy);
    if (*eval) return cmd_eval(common, model_path, data_path, which);
    if (*dump) {
      if (!kind.empty()) pc.kind = pacing_kind_from_string(kind);
      return cmd_pacing_dump(common, index, pc, !kind.empty(), t_end, dump_out);
    }
    if (*infer) return cmd_infer(infer_model, infer_input, threshold);
  } catch (const Error& e) {
    fail_line(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    fail_line("internal", e.what());
    return 1;
  }
  return 0;
}
