#include "tpm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "tpm/error.hpp"

namespace tpm {
namespace {

using nlohmann::ordered_json;

// Reads optional keys into existing defaults and records every problem
// instead of stopping at the first.
class JsonReader {
 public:
  std::vector<std::string> errors;

  // Returns the sub-object at `key`, or null when absent or not an object.
  const ordered_json* section(const ordered_json& parent, const char* key,
                              std::initializer_list<const char*> allowed) {
    const auto it = parent.find(key);
    if (it == parent.end()) return nullptr;
    if (!it->is_object()) {
      errors.push_back(fmt::format("{}: expected an object", key));
      return nullptr;
    }
    check_keys(*it, key, allowed);
    return &*it;
  }

  void check_keys(const ordered_json& obj, const std::string& path,
                  std::initializer_list<const char*> allowed) {
    for (const auto& [name, value] : obj.items()) {
      bool known = false;
      for (const char* a : allowed) known = known || name == a;
      if (!known) {
        errors.push_back(fmt::format("{}{}: unknown key",
                                     path.empty() ? "" : path + ".", name));
      }
    }
  }

  void read(const ordered_json* obj, const std::string& path, const char* key,
            std::string& out) {
    if (const auto* v = find(obj, key)) {
      if (v->is_string()) {
        out = v->get<std::string>();
      } else {
        type_error(path, key, "a string");
      }
    }
  }

  void read(const ordered_json* obj, const std::string& path, const char* key,
            double& out) {
    if (const auto* v = find(obj, key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else {
        type_error(path, key, "a number");
      }
    }
  }

  void read(const ordered_json* obj, const std::string& path, const char* key,
            std::size_t& out) {
    if (const auto* v = find(obj, key)) {
      if (v->is_number_unsigned()) {
        out = v->get<std::size_t>();
      } else {
        type_error(path, key, "a non-negative integer");
      }
    }
  }

  void read(const ordered_json* obj, const std::string& path, const char* key,
            std::vector<std::size_t>& out) {
    if (const auto* v = find(obj, key)) {
      bool ok = v->is_array();
      if (ok) {
        for (const auto& e : *v) ok = ok && e.is_number_unsigned();
      }
      if (ok) {
        out = v->get<std::vector<std::size_t>>();
      } else {
        type_error(path, key, "an array of non-negative integers");
      }
    }
  }

  // Enumerations arrive as strings and go through `parse`.
  template <typename T, typename Parse>
  void read_enum(const ordered_json* obj, const std::string& path,
                 const char* key, T& out, Parse parse) {
    std::string name;
    const std::size_t before = errors.size();
    read(obj, path, key, name);
    if (errors.size() != before || !find(obj, key)) return;
    try {
      out = parse(name);
    } catch (const Error& e) {
      errors.push_back(fmt::format("{}: {}", qualify(path, key), e.what()));
    }
  }

 private:
  static const ordered_json* find(const ordered_json* obj, const char* key) {
    if (!obj) return nullptr;
    const auto it = obj->find(key);
    return it == obj->end() ? nullptr : &*it;
  }

  static std::string qualify(const std::string& path, const char* key) {
    return path.empty() ? std::string(key) : path + "." + key;
  }

  void type_error(const std::string& path, const char* key,
                  const char* expected) {
    errors.push_back(fmt::format("{}: expected {}", qualify(path, key),
                                 expected));
  }
};

Error config_error(const std::vector<std::string>& problems) {
  return Error(ErrorKind::kConfig,
               fmt::format("invalid configuration ({} problem{}):\n  {}",
                           problems.size(), problems.size() == 1 ? "" : "s",
                           fmt::join(problems, "\n  ")));
}

// Keeps the shuffle stream distinct from the initialization stream.
constexpr std::uint64_t kShuffleSalt = 0x9E3779B97F4A7C15ULL;

const std::vector<double>& require_duration(const Dataset& data,
                                            Method method) {
  if (!data.duration) {
    throw Error(ErrorKind::kData,
                fmt::format("method {} needs a duration column",
                            to_string(method)));
  }
  return *data.duration;
}

}  // namespace

RunConfig RunConfig::from_json(const ordered_json& j) {
  RunConfig c;
  JsonReader r;
  if (!j.is_object()) throw config_error({"top level: expected an object"});
  r.check_keys(j, "",
               {"method", "seed", "data", "output", "net", "train", "tree",
                "deconfound", "wlr"});

  r.read_enum(&j, "", "method", c.method, method_from_string);
  std::size_t seed = c.seed;
  r.read(&j, "", "seed", seed);
  c.seed = seed;

  const auto* data = r.section(j, "data", {"train", "test", "label_column",
                                           "duration_column"});
  r.read(data, "data", "train", c.train_path);
  r.read(data, "data", "test", c.test_path);
  r.read(data, "data", "label_column", c.label_column);
  r.read(data, "data", "duration_column", c.duration_column);

  const auto* output = r.section(j, "output", {"model", "log"});
  r.read(output, "output", "model", c.model_path);
  r.read(output, "output", "log", c.log_path);

  const auto* net = r.section(j, "net", {"hidden_dims", "activation"});
  r.read(net, "net", "hidden_dims", c.net.hidden_dims);
  r.read_enum(net, "net", "activation", c.net.activation,
              activation_from_string);

  const auto* train = r.section(
      j, "train", {"batch_size", "epochs", "optimizer", "learning_rate",
                   "beta1", "beta2", "epsilon", "alpha1", "alpha2", "alpha3"});
  r.read(train, "train", "batch_size", c.train.batch_size);
  r.read(train, "train", "epochs", c.train.epochs);
  r.read_enum(train, "train", "optimizer", c.train.optimizer.kind,
              optimizer_kind_from_string);
  r.read(train, "train", "learning_rate", c.train.optimizer.learning_rate);
  r.read(train, "train", "beta1", c.train.optimizer.beta1);
  r.read(train, "train", "beta2", c.train.optimizer.beta2);
  r.read(train, "train", "epsilon", c.train.optimizer.epsilon);
  r.read(train, "train", "alpha1", c.train.weights.alpha1);
  r.read(train, "train", "alpha2", c.train.weights.alpha2);
  r.read(train, "train", "alpha3", c.train.weights.alpha3);

  const auto* tree = r.section(j, "tree", {"kind", "num_leaves", "leaf_values"});
  r.read_enum(tree, "tree", "kind", c.tree_kind, tree_kind_from_string);
  r.read(tree, "tree", "num_leaves", c.num_leaves);
  r.read_enum(tree, "tree", "leaf_values", c.empirical_leaf_means,
              [](std::string_view name) {
                if (name == "midpoint") return false;
                if (name == "empirical_mean") return true;
                throw Error(ErrorKind::kConfig,
                            fmt::format("unknown leaf estimator '{}' "
                                        "(expected midpoint or "
                                        "empirical_mean)",
                                        name));
              });

  const auto* deconfound =
      r.section(j, "deconfound",
                {"num_groups", "conditioning", "scale", "predict_mode"});
  r.read(deconfound, "deconfound", "num_groups", c.num_groups);
  r.read_enum(deconfound, "deconfound", "conditioning", c.conditioning,
              conditioning_from_string);
  r.read_enum(deconfound, "deconfound", "scale", c.group_scale,
              group_scale_from_string);
  r.read_enum(deconfound, "deconfound", "predict_mode", c.predict_mode,
              predict_mode_from_string);

  const auto* wlr = r.section(j, "wlr", {"negative_quantile"});
  r.read(wlr, "wlr", "negative_quantile", c.wlr.negative_quantile);

  auto problems = std::move(r.errors);
  for (auto& p : c.problems()) problems.push_back(std::move(p));
  if (!problems.empty()) throw config_error(problems);
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::kConfig,
                fmt::format("cannot open config file '{}'", path));
  }
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kConfig,
                fmt::format("config file '{}' is not valid JSON: {}", path,
                            e.what()));
  }
  return from_json(j);
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["method"] = to_string(method);
  j["seed"] = seed;
  j["data"] = {{"train", train_path},
               {"test", test_path},
               {"label_column", label_column},
               {"duration_column", duration_column}};
  j["output"] = {{"model", model_path}, {"log", log_path}};
  j["net"] = {{"hidden_dims", net.hidden_dims},
              {"activation", to_string(net.activation)}};
  j["train"] = {{"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"optimizer", to_string(train.optimizer.kind)},
                {"learning_rate", train.optimizer.learning_rate},
                {"beta1", train.optimizer.beta1},
                {"beta2", train.optimizer.beta2},
                {"epsilon", train.optimizer.epsilon},
                {"alpha1", train.weights.alpha1},
                {"alpha2", train.weights.alpha2},
                {"alpha3", train.weights.alpha3}};
  j["tree"] = {{"kind", to_string(tree_kind)},
               {"num_leaves", num_leaves},
               {"leaf_values",
                empirical_leaf_means ? "empirical_mean" : "midpoint"}};
  j["deconfound"] = {{"num_groups", num_groups},
                     {"conditioning", to_string(conditioning)},
                     {"scale", to_string(group_scale)},
                     {"predict_mode", to_string(predict_mode)}};
  j["wlr"] = {{"negative_quantile", wlr.negative_quantile}};
  return j;
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out;
  if (net.hidden_dims.empty()) out.push_back("net.hidden_dims: must be non-empty");
  for (std::size_t w : net.hidden_dims) {
    if (w == 0) {
      out.push_back("net.hidden_dims: widths must be >= 1");
      break;
    }
  }
  if (train.batch_size == 0) out.push_back("train.batch_size: must be >= 1");
  const auto& opt = train.optimizer;
  if (!(std::isfinite(opt.learning_rate) && opt.learning_rate > 0.0)) {
    out.push_back("train.learning_rate: must be finite and > 0");
  }
  if (!(opt.beta1 >= 0.0 && opt.beta1 < 1.0)) {
    out.push_back("train.beta1: must lie in [0, 1)");
  }
  if (!(opt.beta2 >= 0.0 && opt.beta2 < 1.0)) {
    out.push_back("train.beta2: must lie in [0, 1)");
  }
  if (!(std::isfinite(opt.epsilon) && opt.epsilon > 0.0)) {
    out.push_back("train.epsilon: must be finite and > 0");
  }
  const auto& w = train.weights;
  for (auto [name, value] : {std::pair{"alpha1", w.alpha1},
                             std::pair{"alpha2", w.alpha2},
                             std::pair{"alpha3", w.alpha3}}) {
    if (!(std::isfinite(value) && value >= 0.0)) {
      out.push_back(fmt::format("train.{}: must be finite and >= 0", name));
    }
  }
  if (w.alpha1 == 0.0 && w.alpha2 == 0.0 && w.alpha3 == 0.0) {
    out.push_back("train: alpha1, alpha2 and alpha3 are all zero");
  }
  if (num_leaves < 2) out.push_back("tree.num_leaves: must be >= 2");
  if (num_groups < 1) out.push_back("deconfound.num_groups: must be >= 1");
  if (!(wlr.negative_quantile >= 0.0 && wlr.negative_quantile < 1.0)) {
    out.push_back("wlr.negative_quantile: must lie in [0, 1)");
  }
  if (label_column.empty()) out.push_back("data.label_column: must be set");
  if (needs_duration() && duration_column.empty()) {
    out.push_back(fmt::format("data.duration_column: required by method {}",
                              to_string(method)));
  }
  return out;
}

void RunConfig::validate() const {
  const auto p = problems();
  if (!p.empty()) throw config_error(p);
}

bool RunConfig::needs_duration() const {
  switch (method) {
    case Method::kTpmDeconfounded:
    case Method::kD2q:
      return true;
    case Method::kOr:
      return num_groups > 1;
    case Method::kTpm:
    case Method::kWlr:
      return false;
  }
  return false;
}

CsvSchema RunConfig::schema() const {
  CsvSchema s;
  s.label_column = label_column;
  s.duration_column = duration_column;
  s.require_duration = needs_duration();
  return s;
}

void check_training_inputs(const RunConfig& config) {
  auto problems = config.problems();
  if (config.train_path.empty()) {
    problems.push_back("data.train: required");
  } else if (!std::filesystem::exists(config.train_path)) {
    problems.push_back(
        fmt::format("data.train: file '{}' does not exist", config.train_path));
  } else {
    std::vector<std::string> header;
    try {
      header = read_csv_header(config.train_path);
    } catch (const Error& e) {
      problems.push_back(fmt::format("data.train: {}", e.what()));
    }
    auto has = [&](const std::string& name) {
      return std::find(header.begin(), header.end(), name) != header.end();
    };
    if (!header.empty() && !has(config.label_column)) {
      problems.push_back(fmt::format("data.train: label column '{}' not found",
                                     config.label_column));
    }
    if (!header.empty() && config.needs_duration() &&
        !has(config.duration_column)) {
      problems.push_back(fmt::format(
          "data.train: duration column '{}' required by method {} not found",
          config.duration_column, to_string(config.method)));
    }
  }
  if (!problems.empty()) throw config_error(problems);
}

ModelFile train_model(const RunConfig& config, const Dataset& data,
                      TrainLog* log) {
  config.validate();
  NetConfig net = config.net;
  net.seed = config.seed;
  TrainConfig train = config.train;
  train.seed = config.seed ^ kShuffleSalt;

  ModelFile file;
  file.config = config.to_json();
  switch (config.method) {
    case Method::kTpm:
      file.model = train_tpm(
          data,
          TpmConfig{config.num_leaves, config.tree_kind,
                    config.empirical_leaf_means},
          net, train, log);
      break;
    case Method::kTpmDeconfounded: {
      DeconfoundConfig dc;
      dc.num_groups = config.num_groups;
      dc.num_leaves = config.num_leaves;
      dc.tree_kind = config.tree_kind;
      dc.conditioning = config.conditioning;
      dc.scale = config.group_scale;
      dc.empirical_leaf_means = config.empirical_leaf_means;
      file.model = DeconfoundedPredictor{
          train_deconfounded(data, require_duration(data, config.method), dc,
                             net, train, log),
          config.predict_mode};
      break;
    }
    case Method::kWlr:
      file.model = wlr_train(data, config.wlr, net, train, log);
      break;
    case Method::kD2q:
      file.model = d2q_train(data, config.num_groups, net, train, log);
      break;
    case Method::kOr:
      file.model = or_train(data, build_scale(data.watch_time, config.num_leaves),
                            net, train, config.num_groups, log);
      break;
  }
  return file;
}

std::vector<Prediction> predict_all(const AnyModel& model,
                                    const Dataset& data) {
  data.validate();
  const Method method = method_of(model);
  std::vector<Prediction> out(data.size());
  const auto duration = [&](std::size_t i) {
    return require_duration(data, method)[i];
  };
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        for (std::size_t i = 0; i < data.size(); ++i) {
          const auto x = data.features.row(i);
          if constexpr (std::is_same_v<T, TpmModel>) {
            const auto dist = m.predict(x);
            out[i] = {dist.expectation, dist.std_dev()};
          } else if constexpr (std::is_same_v<T, DeconfoundedPredictor>) {
            const double d =
                m.mode == PredictMode::kDo ? 0.0 : duration(i);
            const auto moments = m.model.predict_moments(x, d, m.mode);
            out[i] = {moments.expectation, std::sqrt(moments.variance)};
          } else if constexpr (std::is_same_v<T, WlrModel>) {
            out[i] = {m.predict(x), std::nullopt};
          } else if constexpr (std::is_same_v<T, D2qModel>) {
            out[i] = {m.predict(x, duration(i)), std::nullopt};
          } else {
            const auto d = m.partition ? std::optional(duration(i))
                                       : std::nullopt;
            out[i] = {m.predict(x, d), std::nullopt};
          }
        }
      },
      model);
  return out;
}

Metrics evaluate(const AnyModel& model, const Dataset& data,
                 const XaucOptions& options) {
  const auto preds = predict_all(model, data);
  std::vector<double> values(preds.size());
  double std_sum = 0.0;
  bool has_std = !preds.empty();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    values[i] = preds[i].value;
    if (preds[i].std_dev) {
      std_sum += *preds[i].std_dev;
    } else {
      has_std = false;
    }
  }
  Metrics m;
  m.n = preds.size();
  m.mae = mae(values, data.watch_time);
  m.xauc = xauc(values, data.watch_time, options);
  if (has_std) m.mean_std = std_sum / static_cast<double>(preds.size());
  return m;
}

std::string to_json_line(const Metrics& metrics) {
  ordered_json j;
  j["n"] = metrics.n;
  j["mae"] = metrics.mae;
  j["xauc"] = metrics.xauc;
  j["mean_std"] = metrics.mean_std ? ordered_json(*metrics.mean_std)
                                   : ordered_json(nullptr);
  return j.dump();
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kNumLeaves: return "num_leaves";
    case SweepAxis::kNumGroups: return "num_groups";
    case SweepAxis::kAlpha2: return "alpha2";
  }
  return "unknown";
}

SweepAxis sweep_axis_from_string(std::string_view name) {
  for (SweepAxis a :
       {SweepAxis::kNumLeaves, SweepAxis::kNumGroups, SweepAxis::kAlpha2}) {
    if (to_string(a) == name) return a;
  }
  throw Error(ErrorKind::kConfig,
              fmt::format("unknown sweep axis '{}' (expected num_leaves, "
                          "num_groups or alpha2)",
                          name));
}

std::vector<SweepRow> sweep(const RunConfig& config, SweepAxis axis,
                            const std::vector<double>& values,
                            const Dataset& train, const Dataset& test) {
  std::vector<std::string> problems;
  for (double v : values) {
    if (axis != SweepAxis::kAlpha2 &&
        !(v >= 1.0 && v == std::floor(v) && v < 1e9)) {
      problems.push_back(fmt::format("{} value {} is not a positive integer",
                                     to_string(axis), v));
    }
  }
  if (values.empty()) problems.push_back("no sweep values given");
  if (!problems.empty()) throw config_error(problems);

  std::vector<SweepRow> rows;
  for (double v : values) {
    RunConfig c = config;
    switch (axis) {
      case SweepAxis::kNumLeaves:
        c.num_leaves = static_cast<std::size_t>(v);
        break;
      case SweepAxis::kNumGroups:
        c.num_groups = static_cast<std::size_t>(v);
        break;
      case SweepAxis::kAlpha2:
        c.train.weights.alpha2 = v;
        break;
    }
    const ModelFile file = train_model(c, train);
    rows.push_back({axis, v, evaluate(file.model, test)});
  }
  return rows;
}

std::string to_json_line(const SweepRow& row) {
  ordered_json j;
  j["axis"] = to_string(row.axis);
  j["value"] = row.value;
  j["n"] = row.metrics.n;
  j["mae"] = row.metrics.mae;
  j["xauc"] = row.metrics.xauc;
  j["mean_std"] = row.metrics.mean_std ? ordered_json(*row.metrics.mean_std)
                                       : ordered_json(nullptr);
  return j.dump();
}

std::string dump_tree(const DecompositionTree& tree) {
  const OrdinalScale& scale = tree.scale();
  std::string out;
  const auto nodes = tree.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& node = nodes[i];
    out += fmt::format("n{}: [{}, {}]", i, scale.interval_lower(node.start),
                       scale.interval_upper(node.end - 1));
    if (node.is_leaf()) {
      out += fmt::format(" leaf {} midpoint {} value {}\n", node.start,
                         scale.midpoint(node.start),
                         tree.leaf_values()[node.start]);
    } else {
      out += fmt::format(" head {} -> n{}, n{}\n", *node.head,
                         node.children->first, node.children->second);
    }
  }
  return out;
}

std::string inspect_tree(const AnyModel& model) {
  if (const auto* m = std::get_if<TpmModel>(&model)) {
    return fmt::format("{} tree, {} leaves, {} heads\n{}",
                       to_string(m->tree.kind()), m->tree.leaf_count(),
                       m->tree.num_heads(), dump_tree(m->tree));
  }
  if (const auto* p = std::get_if<DeconfoundedPredictor>(&model)) {
    const DeconfoundedModel& m = p->model;
    const auto bounds = m.partition().boundaries();
    std::string out;
    for (std::size_t g = 0; g < m.trees().size(); ++g) {
      const auto& tree = m.trees()[g];
      out += fmt::format(
          "group {}: duration [{}, {}] prior {}; {} tree, {} leaves\n", g,
          bounds[g], bounds[g + 1], m.partition().prior()[g],
          to_string(tree.kind()), tree.leaf_count());
      out += dump_tree(tree);
    }
    return out;
  }
  throw Error(ErrorKind::kInvalidArgument,
              fmt::format("method {} has no decomposition tree",
                          to_string(method_of(model))));
}

}  // namespace tpm
