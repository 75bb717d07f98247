#pragma once

// Run configuration and the batch operations behind the command-line tool.
//
// Configuration is one JSON document; every key is optional and falls back
// to the defaults below.
//
//   key                          default
//   method                       "tpm"  (tpm, tpm-deconfounded, wlr, d2q, or)
//   seed                         0      (net init and batch shuffling)
//   data.train / data.test       ""
//   data.label_column            "watch_time"
//   data.duration_column         "duration"
//   output.model / output.log    "" (log: JSON lines, one per epoch)
//   net.hidden_dims              [64, 32]
//   net.activation               "relu" (relu, tanh)
//   train.batch_size             256
//   train.epochs                 20
//   train.optimizer              "adam" (adam, sgd)
//   train.learning_rate          1e-3
//   train.beta1 / beta2 / epsilon 0.9 / 0.999 / 1e-8
//   train.alpha1 / alpha2 / alpha3 1 / 1 / 1
//   tree.kind                    "balanced" (balanced, linear)
//   tree.num_leaves              32
//   tree.leaf_values             "midpoint" (midpoint, empirical_mean)
//   deconfound.num_groups        32  (also used by d2q and or; or ignores
//                                     groups when set to 1)
//   deconfound.conditioning      "shared" (shared, separate)
//   deconfound.scale             "per_group" (per_group, global)
//   deconfound.predict_mode      "conditional" (conditional, do)
//   wlr.negative_quantile        0.25

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tpm/baselines.hpp"
#include "tpm/dataset.hpp"
#include "tpm/deconfound.hpp"
#include "tpm/metrics.hpp"
#include "tpm/model_file.hpp"
#include "tpm/progressive.hpp"

namespace tpm {

struct RunConfig {
  Method method = Method::kTpm;
  std::uint64_t seed = 0;

  std::string train_path;
  std::string test_path;
  std::string label_column = "watch_time";
  std::string duration_column = "duration";
  std::string model_path;
  std::string log_path;

  NetConfig net;
  TrainConfig train;

  TreeKind tree_kind = TreeKind::kBalanced;
  std::size_t num_leaves = 32;
  bool empirical_leaf_means = false;

  std::size_t num_groups = 32;
  Conditioning conditioning = Conditioning::kSharedNet;
  GroupScale group_scale = GroupScale::kPerGroup;
  PredictMode predict_mode = PredictMode::kConditional;

  WlrConfig wlr;

  // Parses and validates in one pass; every problem found is reported in a
  // single Error(kConfig), one per line.
  static RunConfig from_json(const nlohmann::ordered_json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::ordered_json to_json() const;

  // Problems with the current field values, empty when valid.
  std::vector<std::string> problems() const;
  // Throws Error(kConfig) listing every problem.
  void validate() const;

  bool needs_duration() const;
  CsvSchema schema() const;
};

// Trains the configured method on `data` with `config.seed`.
ModelFile train_model(const RunConfig& config, const Dataset& data,
                      TrainLog* log = nullptr);

// Combined config and data-header checks before a training run: every
// problem is reported in one Error(kConfig).
void check_training_inputs(const RunConfig& config);

struct Prediction {
  double value = 0.0;
  std::optional<double> std_dev;  // only for the tree-based methods
};

// Methods that condition on duration require it in `data`.
std::vector<Prediction> predict_all(const AnyModel& model, const Dataset& data);

struct Metrics {
  std::size_t n = 0;
  double mae = 0.0;
  double xauc = 0.0;
  std::optional<double> mean_std;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics evaluate(const AnyModel& model, const Dataset& data,
                 const XaucOptions& options = {});
std::string to_json_line(const Metrics& metrics);

enum class SweepAxis { kNumLeaves, kNumGroups, kAlpha2 };
std::string_view to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(std::string_view name);

struct SweepRow {
  SweepAxis axis = SweepAxis::kNumLeaves;
  double value = 0.0;
  Metrics metrics;
};

// One train + evaluate per value, in the given order.
std::vector<SweepRow> sweep(const RunConfig& config, SweepAxis axis,
                            const std::vector<double>& values,
                            const Dataset& train, const Dataset& test);
std::string to_json_line(const SweepRow& row);

// One line per node in breadth-first order, e.g. "n4: [0.2, 0.6] head 3".
std::string dump_tree(const DecompositionTree& tree);
// Tree dump of a saved model; deconfounded models list every group.
// Throws Error(kInvalidArgument) for methods without a tree.
std::string inspect_tree(const AnyModel& model);

}  // namespace tpm
