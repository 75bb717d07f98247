// Command-line front end: train, predict, evaluate, sweep, inspect-tree and
// gen-synthetic. Records go to stdout (or --out) as JSON lines.
//
// Exit codes: 0 success, 1 other failure, 2 configuration or usage error,
// 3 data error, 4 training divergence, 5 unreadable model file.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "tpm/error.hpp"
#include "tpm/model_file.hpp"
#include "tpm/pipeline.hpp"
#include "tpm/synthetic.hpp"

namespace {

using tpm::Error;
using tpm::ErrorKind;

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitModelFormat = 5;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kData: return kExitData;
    case ErrorKind::kDivergence: return kExitDivergence;
    case ErrorKind::kModelFormat: return kExitModelFormat;
    case ErrorKind::kInvalidArgument: return kExitOther;
  }
  return kExitOther;
}

struct Overrides {
  std::string config;
  std::string data;
  std::string model;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string method;
  std::optional<std::size_t> leaves;
  std::optional<std::size_t> groups;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--data", o.data, "Training CSV (overrides data.train)");
  cmd->add_option("--seed", o.seed, "Seed (overrides seed)");
  cmd->add_option("--method", o.method,
                  "tpm, tpm-deconfounded, wlr, d2q or or");
  cmd->add_option("--leaves", o.leaves, "Number of leaves");
  cmd->add_option("--groups", o.groups, "Number of duration groups");
}

tpm::RunConfig resolve(const Overrides& o) {
  tpm::RunConfig c;
  if (!o.config.empty()) c = tpm::RunConfig::from_file(o.config);
  if (!o.data.empty()) c.train_path = o.data;
  if (o.seed) c.seed = *o.seed;
  if (!o.method.empty()) c.method = tpm::method_from_string(o.method);
  if (o.leaves) c.num_leaves = *o.leaves;
  if (o.groups) c.num_groups = *o.groups;
  return c;
}

// Writes to `path`, or stdout when it is empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::trunc);
      if (!file_) {
        throw Error(ErrorKind::kInvalidArgument,
                    fmt::format("cannot write '{}'", path));
      }
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

// Column names and duration requirements come from the config that
// produced the model.
tpm::CsvSchema schema_for(const tpm::ModelFile& file, bool require_label) {
  tpm::RunConfig c = tpm::RunConfig::from_json(file.config);
  c.method = file.method();
  tpm::CsvSchema schema = c.schema();
  if (c.method == tpm::Method::kTpmDeconfounded &&
      std::get<tpm::DeconfoundedPredictor>(file.model).mode ==
          tpm::PredictMode::kDo) {
    schema.require_duration = false;
  }
  schema.require_label = require_label;
  return schema;
}

int cmd_train(const Overrides& o) {
  tpm::RunConfig c = resolve(o);
  if (!o.model.empty()) c.model_path = o.model;
  if (!o.out.empty()) c.log_path = o.out;
  tpm::check_training_inputs(c);
  if (c.model_path.empty()) {
    throw Error(ErrorKind::kConfig,
                "invalid configuration (1 problem):\n  output.model: required "
                "(or pass --model)");
  }
  const tpm::Dataset data = tpm::load_csv(c.train_path, c.schema());
  tpm::TrainLog log;
  const tpm::ModelFile file = tpm::train_model(c, data, &log);
  tpm::save_model(c.model_path, file);

  Output out(c.log_path);
  for (const auto& record : log) out.stream() << tpm::to_json_line(record) << '\n';
  if (!c.test_path.empty()) {
    const tpm::Dataset test = tpm::load_csv(c.test_path, c.schema());
    std::cout << tpm::to_json_line(tpm::evaluate(file.model, test)) << '\n';
  }
  return 0;
}

int cmd_predict(const Overrides& o) {
  const tpm::ModelFile file = tpm::load_model(o.model);
  const tpm::Dataset data = tpm::load_csv(o.data, schema_for(file, false));
  const auto preds = tpm::predict_all(file.model, data);
  Output out(o.out);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    nlohmann::ordered_json j;
    j["row"] = i;
    j["prediction"] = preds[i].value;
    j["std"] = preds[i].std_dev ? nlohmann::ordered_json(*preds[i].std_dev)
                                : nlohmann::ordered_json(nullptr);
    out.stream() << j.dump() << '\n';
  }
  return 0;
}

int cmd_evaluate(const Overrides& o) {
  const tpm::ModelFile file = tpm::load_model(o.model);
  const tpm::Dataset data = tpm::load_csv(o.data, schema_for(file, true));
  Output out(o.out);
  out.stream() << tpm::to_json_line(tpm::evaluate(file.model, data)) << '\n';
  return 0;
}

int cmd_sweep(const Overrides& o, const std::string& axis_name,
              const std::vector<double>& values) {
  const tpm::RunConfig c = resolve(o);
  const tpm::SweepAxis axis = tpm::sweep_axis_from_string(axis_name);
  tpm::check_training_inputs(c);
  const tpm::Dataset train = tpm::load_csv(c.train_path, c.schema());
  const tpm::Dataset test =
      c.test_path.empty() ? train : tpm::load_csv(c.test_path, c.schema());
  Output out(o.out);
  for (const auto& row : tpm::sweep(c, axis, values, train, test)) {
    out.stream() << tpm::to_json_line(row) << '\n';
  }
  return 0;
}

int cmd_inspect(const Overrides& o) {
  const tpm::ModelFile file = tpm::load_model(o.model);
  Output out(o.out);
  out.stream() << tpm::inspect_tree(file.model);
  return 0;
}

int cmd_generate(const tpm::SyntheticSpec& spec, const std::string& out_path) {
  spec.validate();
  const tpm::SyntheticData synth = tpm::generate_synthetic(spec);
  tpm::write_csv(out_path, synth.data);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-based progressive regression for watch-time prediction"};
  app.require_subcommand(1);

  Overrides o;
  std::string axis;
  std::vector<double> values;
  tpm::SyntheticSpec spec;
  std::string gen_out;

  auto* train = app.add_subcommand("train", "Train a model and save it");
  add_run_flags(train, o);
  train->add_option("--model", o.model, "Output model file");
  train->add_option("--out", o.out, "Training log (JSON lines)");

  auto* predict = app.add_subcommand("predict", "Predict watch time");
  predict->add_option("--model", o.model, "Model file")->required();
  predict->add_option("--data", o.data, "CSV to score")->required();
  predict->add_option("--out", o.out, "Predictions (JSON lines)");

  auto* evaluate = app.add_subcommand("evaluate", "MAE, XAUC and mean std");
  evaluate->add_option("--model", o.model, "Model file")->required();
  evaluate->add_option("--data", o.data, "Labelled CSV")->required();
  evaluate->add_option("--out", o.out, "Metrics record");

  auto* sweep = app.add_subcommand("sweep", "Train and evaluate per value");
  add_run_flags(sweep, o);
  sweep->add_option("--axis", axis, "num_leaves, num_groups or alpha2")
      ->required();
  sweep->add_option("--values", values, "Comma-separated values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--out", o.out, "Rows (JSON lines)");

  auto* inspect = app.add_subcommand("inspect-tree", "Print the tree");
  inspect->add_option("--model", o.model, "Model file")->required();
  inspect->add_option("--out", o.out, "Output file");

  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic CSV");
  gen->add_option("--out", gen_out, "Output CSV")->required();
  gen->add_option("--seed", spec.seed, "Seed");
  gen->add_option("--rows", spec.rows, "Number of rows");
  gen->add_option("--dim", spec.input_dim, "Number of features (>= 4)");
  gen->add_option("--noise", spec.noise, "Relative noise scale");
  gen->add_option("--confounding-x", spec.confounding_x, "Duration -> X");
  gen->add_option("--confounding-t", spec.confounding_t, "Duration -> T");
  gen->add_option("--levels", spec.duration_levels, "Duration levels");
  gen->add_option("--base", spec.base_watch_time, "Base watch time");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train(o);
    if (predict->parsed()) return cmd_predict(o);
    if (evaluate->parsed()) return cmd_evaluate(o);
    if (sweep->parsed()) return cmd_sweep(o, axis, values);
    if (inspect->parsed()) return cmd_inspect(o);
    if (gen->parsed()) return cmd_generate(spec, gen_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
