#include "mexit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mexit/error.hpp"

namespace mexit {

using nlohmann::json;

namespace {

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

/// Reads fields from one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + "." + key + ": unknown field");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_plateau(const json& j, const std::string& path, PlateauPolicy& p) {
  Fields f(j, path);
  f.get("enabled", p.enabled);
  f.get("factor", p.factor);
  f.get("patience", p.patience);
  f.get("min_delta", p.min_delta);
  f.get("min_lr", p.min_lr);
}

json write_plateau(const PlateauPolicy& p) {
  return {{"enabled", p.enabled}, {"factor", p.factor}, {"patience", p.patience}, {"min_delta", p.min_delta},
          {"min_lr", p.min_lr}};
}

void read_optimizer(const json& j, const std::string& path, OptimizerConfig& o) {
  Fields f(j, path);
  std::string kind(to_string(o.kind));
  f.get("kind", kind);
  o.kind = optimizer_kind_from_string(kind);
  f.get("learning_rate", o.learning_rate);
  f.get("beta1", o.beta1);
  f.get("beta2", o.beta2);
  f.get("epsilon", o.epsilon);
  if (auto* p = f.sub("plateau")) read_plateau(*p, f.path("plateau"), o.plateau);
}

json write_optimizer(const OptimizerConfig& o) {
  return {{"kind", std::string(to_string(o.kind))}, {"learning_rate", o.learning_rate}, {"beta1", o.beta1},
          {"beta2", o.beta2}, {"epsilon", o.epsilon}, {"plateau", write_plateau(o.plateau)}};
}

PacingConfig read_pacing(const json& j, const std::string& path) {
  Fields f(j, path);
  PacingConfig c;
  std::string kind;
  f.get("kind", kind);
  if (kind.empty()) throw ConfigError(path + ".kind: required");
  c.kind = pacing_kind_from_string(kind);
  if (c.kind == PacingKind::single_step) c.start = 0.30;
  f.get("start", c.start);
  f.get("full_at", c.full_at);
  f.get("exponent", c.exponent);
  f.get("growth", c.growth);
  f.get("step", c.step);
  f.get("buckets", c.buckets);
  PacingFunction{c};  // validates
  return c;
}

json write_pacing(const PacingConfig& c) {
  return {{"kind", std::string(to_string(c.kind))}, {"start", c.start}, {"full_at", c.full_at},
          {"exponent", c.exponent}, {"growth", c.growth}, {"step", c.step}, {"buckets", c.buckets}};
}

}  // namespace

std::vector<LayerSpec> BackboneSpec::layers(std::size_t classes) const {
  return {LayerSpec::conv2d(conv1_filters), LayerSpec::relu(), LayerSpec::maxpool2d(),
          LayerSpec::conv2d(conv2_filters), LayerSpec::relu(), LayerSpec::maxpool2d(),
          LayerSpec::flatten(),           LayerSpec::dense(classes), LayerSpec::softmax()};
}

std::vector<PacingConfig> default_pacing_grid() {
  return {PacingConfig::fixed_exponential(0.04, 1.9, 100), PacingConfig::fixed_exponential(0.04, 1.9, 200),
          PacingConfig::fixed_exponential(0.04, 1.9, 300), PacingConfig::single_step(0.30, 300)};
}

void ExperimentConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw ConfigError("schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                      std::to_string(kConfigSchemaVersion) + ")");
  }
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (strategies.empty()) throw ConfigError("strategies must not be empty");
  if (optimizer_grid.kinds.empty() || optimizer_grid.learning_rates.empty()) throw ConfigError("optimizer grid is empty");
  for (double lr : optimizer_grid.learning_rates)
    if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
  bool paced = false;
  for (StrategyKind s : strategies) paced |= s != StrategyKind::vanilla;
  if (paced && pacing_grid.empty()) throw ConfigError("pacing grid is empty");
  std::set<std::string> names;
  for (const TeacherSpec& t : teachers) {
    if (t.kind != "self" && t.kind != "mlp") throw ConfigError("teacher '" + t.name + "': kind must be self or mlp");
    if (!names.insert(t.name).second) throw ConfigError("duplicate teacher name '" + t.name + "'");
  }
  if (branches.empty()) throw ConfigError("at least one branch is required");
  const std::size_t depth = backbone.layers(2).size();
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (branches[i].location < 1 || branches[i].location > depth) {
      throw ConfigError("branch location " + std::to_string(branches[i].location) + " is not a backbone layer (1.." +
                        std::to_string(depth) + ")");
    }
    if (i && branches[i].location <= branches[i - 1].location) throw ConfigError("branch locations must increase");
  }
  split.validate();
  if (dataset.kind != "synthetic" && dataset.kind != "cifar10" && dataset.kind != "cifar100" && dataset.kind != "text") {
    throw ConfigError("dataset.kind must be synthetic, cifar10, cifar100 or text");
  }
  if (dataset.kind != "synthetic" && dataset.paths.empty()) throw ConfigError("dataset.paths is required");
}

ExperimentConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  c.teachers.clear();
  bool teachers_given = false;
  {
    Fields f(j, "config");
    f.get("schema_version", c.schema_version);
    if (c.schema_version != kConfigSchemaVersion) c.validate();
    f.get("name", c.name);
    if (auto* d = f.sub("dataset")) {
      Fields df(*d, "config.dataset");
      df.get("kind", c.dataset.kind);
      df.get("paths", c.dataset.paths);
      df.get("max_records", c.dataset.max_records);
      if (auto* s = df.sub("synthetic")) {
        Fields sf(*s, "config.dataset.synthetic");
        SyntheticSpec& sp = c.dataset.synthetic;
        sf.get("classes", sp.classes);
        sf.get("sample_shape", sp.sample_shape);
        sf.get("samples", sp.samples);
        sf.get("center_scale", sp.center_scale);
        sf.get("noise", sp.noise);
        sf.get("hard_fraction", sp.hard_fraction);
        sf.get("hard_noise_multiplier", sp.hard_noise_multiplier);
        sf.get("hard_label_flip", sp.hard_label_flip);
        sf.get("seed", sp.seed);
      }
    }
    if (auto* s = f.sub("split")) {
      Fields sf(*s, "config.split");
      sf.get("train", c.split.train);
      sf.get("validation", c.split.validation);
      sf.get("test", c.split.test);
      sf.get("hyper", c.split.hyper);
      sf.get("seed", c.split.seed);
    }
    if (auto* b = f.sub("backbone")) {
      Fields bf(*b, "config.backbone");
      bf.get("name", c.backbone.name);
      bf.get("conv1_filters", c.backbone.conv1_filters);
      bf.get("conv2_filters", c.backbone.conv2_filters);
      bf.get("epochs", c.backbone.epochs);
      bf.get("batch_size", c.backbone.batch_size);
      if (auto* o = bf.sub("optimizer")) read_optimizer(*o, "config.backbone.optimizer", c.backbone.optimizer);
    }
    if (auto* bs = f.sub("branches")) {
      if (!bs->is_array()) throw ConfigError("config.branches: expected an array");
      for (std::size_t i = 0; i < bs->size(); ++i) {
        Fields bf((*bs)[i], "config.branches[" + std::to_string(i) + "]");
        BranchSpec b;
        bf.get("location", b.location);
        bf.get("conv_filters", b.conv_filters);
        bf.get("conv_kernel", b.conv_kernel);
        bf.get("pool", b.pool);
        bf.get("dense1", b.dense1);
        bf.get("dense2", b.dense2);
        bf.get("dropout", b.dropout);
        bf.get("hidden_relu", b.hidden_relu);
        c.branches.push_back(b);
      }
    }
    if (auto* ts = f.sub("teachers")) {
      teachers_given = true;
      if (!ts->is_array()) throw ConfigError("config.teachers: expected an array");
      for (std::size_t i = 0; i < ts->size(); ++i) {
        const std::string path = "config.teachers[" + std::to_string(i) + "]";
        TeacherSpec t;
        if ((*ts)[i].is_string()) {
          t.kind = (*ts)[i].get<std::string>();
          t.name = t.kind;
        } else {
          Fields tf((*ts)[i], path);
          tf.get("kind", t.kind);
          t.name = t.kind;
          tf.get("name", t.name);
          tf.get("hidden", t.hidden);
          tf.get("dropout", t.dropout);
          tf.get("epochs", t.epochs);
          tf.get("batch_size", t.batch_size);
          if (auto* o = tf.sub("optimizer")) read_optimizer(*o, path + ".optimizer", t.optimizer);
        }
        c.teachers.push_back(t);
      }
    }
    if (auto* ss = f.sub("strategies")) {
      std::vector<std::string> names;
      try {
        names = ss->get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw ConfigError(std::string("config.strategies: ") + e.what());
      }
      c.strategies.clear();
      for (const auto& n : names) c.strategies.push_back(strategy_kind_from_string(n));
    }
    if (auto* g = f.sub("optimizer_grid")) {
      Fields gf(*g, "config.optimizer_grid");
      if (auto* k = gf.sub("kinds")) {
        c.optimizer_grid.kinds.clear();
        for (const auto& n : k->get<std::vector<std::string>>()) c.optimizer_grid.kinds.push_back(optimizer_kind_from_string(n));
      }
      gf.get("learning_rates", c.optimizer_grid.learning_rates);
      if (auto* p = gf.sub("plateau")) read_plateau(*p, "config.optimizer_grid.plateau", c.optimizer_grid.plateau);
    }
    if (auto* pg = f.sub("pacing_grid")) {
      if (!pg->is_array()) throw ConfigError("config.pacing_grid: expected an array");
      c.pacing_grid.clear();
      for (std::size_t i = 0; i < pg->size(); ++i)
        c.pacing_grid.push_back(read_pacing((*pg)[i], "config.pacing_grid[" + std::to_string(i) + "]"));
    }
    f.get("epochs", c.epochs);
    f.get("search_epochs", c.search_epochs);
    f.get("batch_size", c.batch_size);
    f.get("repetitions", c.repetitions);
    f.get("master_seed", c.master_seed);
    f.get("early_stopping_patience", c.early_stopping_patience);
    f.get("threads", c.threads);
  }
  if (!teachers_given) c.teachers = {TeacherSpec{}};
  c.validate();
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["name"] = c.name;
  const SyntheticSpec& s = c.dataset.synthetic;
  j["dataset"] = {{"kind", c.dataset.kind},
                  {"paths", c.dataset.paths},
                  {"max_records", c.dataset.max_records},
                  {"synthetic",
                   {{"classes", s.classes},
                    {"sample_shape", s.sample_shape},
                    {"samples", s.samples},
                    {"center_scale", s.center_scale},
                    {"noise", s.noise},
                    {"hard_fraction", s.hard_fraction},
                    {"hard_noise_multiplier", s.hard_noise_multiplier},
                    {"hard_label_flip", s.hard_label_flip},
                    {"seed", s.seed}}}};
  j["split"] = {{"train", c.split.train},
                {"validation", c.split.validation},
                {"test", c.split.test},
                {"hyper", c.split.hyper},
                {"seed", c.split.seed}};
  j["backbone"] = {{"name", c.backbone.name},
                   {"conv1_filters", c.backbone.conv1_filters},
                   {"conv2_filters", c.backbone.conv2_filters},
                   {"epochs", c.backbone.epochs},
                   {"batch_size", c.backbone.batch_size},
                   {"optimizer", write_optimizer(c.backbone.optimizer)}};
  j["branches"] = json::array();
  for (const BranchSpec& b : c.branches) {
    j["branches"].push_back({{"location", b.location},
                             {"conv_filters", b.conv_filters},
                             {"conv_kernel", b.conv_kernel},
                             {"pool", b.pool},
                             {"dense1", b.dense1},
                             {"dense2", b.dense2},
                             {"dropout", b.dropout},
                             {"hidden_relu", b.hidden_relu}});
  }
  j["teachers"] = json::array();
  for (const TeacherSpec& t : c.teachers) {
    j["teachers"].push_back({{"name", t.name},
                             {"kind", t.kind},
                             {"hidden", t.hidden},
                             {"dropout", t.dropout},
                             {"epochs", t.epochs},
                             {"batch_size", t.batch_size},
                             {"optimizer", write_optimizer(t.optimizer)}});
  }
  j["strategies"] = json::array();
  for (StrategyKind k : c.strategies) j["strategies"].push_back(std::string(to_string(k)));
  json kinds = json::array();
  for (OptimizerKind k : c.optimizer_grid.kinds) kinds.push_back(std::string(to_string(k)));
  j["optimizer_grid"] = {{"kinds", kinds},
                         {"learning_rates", c.optimizer_grid.learning_rates},
                         {"plateau", write_plateau(c.optimizer_grid.plateau)}};
  j["pacing_grid"] = json::array();
  for (const PacingConfig& p : c.pacing_grid) j["pacing_grid"].push_back(write_pacing(p));
  j["epochs"] = c.epochs;
  j["search_epochs"] = c.search_epochs;
  j["batch_size"] = c.batch_size;
  j["repetitions"] = c.repetitions;
  j["master_seed"] = c.master_seed;
  j["early_stopping_patience"] = c.early_stopping_patience;
  j["threads"] = c.threads;
  return j.dump(2);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace mexit
