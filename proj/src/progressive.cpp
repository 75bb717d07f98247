#include "tpm/progressive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "fit.hpp"
#include "tpm/error.hpp"

namespace tpm {
namespace {

constexpr double kStdSmoothing = 1e-12;

void check_heads(const DecompositionTree& tree,
                 std::span<const double> head_probs) {
  if (head_probs.size() != tree.num_heads()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("expected {} head probabilities, got {}",
                            tree.num_heads(), head_probs.size()));
  }
}

// Probability mass reaching every node, root = 1.
void node_masses(const DecompositionTree& tree,
                 std::span<const double> head_probs,
                 std::vector<double>& mass) {
  const auto nodes = tree.nodes();
  mass.assign(nodes.size(), 0.0);
  mass[tree.root()] = 1.0;
  for (std::size_t n : tree.top_down_order()) {
    const TreeNode& node = nodes[n];
    const double p = head_probs[*node.head];
    mass[node.children->first] = mass[n] * (1.0 - p);
    mass[node.children->second] = mass[n] * p;
  }
}

}  // namespace

double LeafDistribution::std_dev() const {
  return std::sqrt(std::max(variance, 0.0));
}

void LossWeights::validate() const {
  if (!(alpha1 >= 0.0) || !(alpha2 >= 0.0) || !(alpha3 >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument,
                "loss weights must be finite and >= 0");
  }
  if (alpha1 == 0.0 && alpha2 == 0.0 && alpha3 == 0.0) {
    throw Error(ErrorKind::kInvalidArgument, "loss weights are all zero");
  }
}

void TrainConfig::validate() const {
  weights.validate();
  if (batch_size < 1) {
    throw Error(ErrorKind::kInvalidArgument, "batch_size must be >= 1");
  }
}

void leaf_distribution(const DecompositionTree& tree,
                       std::span<const double> head_probs,
                       LeafDistribution& out) {
  check_heads(tree, head_probs);
  std::vector<double> mass;
  node_masses(tree, head_probs, mass);

  const std::size_t m = tree.leaf_count();
  const auto values = tree.leaf_values();
  out.probs.resize(m);
  double mean = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    out.probs[k] = mass[tree.leaf_node(k)];
    mean += out.probs[k] * values[k];
  }
  double var = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double d = values[k] - mean;
    var += out.probs[k] * d * d;
  }
  const auto& scale = tree.scale();
  out.expectation = std::clamp(mean, scale.lower(), scale.upper());
  out.variance = std::max(var, 0.0);
}

LeafDistribution leaf_distribution(const DecompositionTree& tree,
                                   std::span<const double> head_probs) {
  LeafDistribution out;
  leaf_distribution(tree, head_probs, out);
  return out;
}

double log_likelihood(const DecompositionTree& tree,
                      std::span<const double> head_probs, std::size_t leaf) {
  check_heads(tree, head_probs);
  if (leaf >= tree.leaf_count()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("leaf {} out of range", leaf));
  }
  double ll = 0.0;
  for (const PathStep& step : tree.path(leaf)) {
    const double p = head_probs[step.head];
    ll += std::log(step.label == 1 ? p : 1.0 - p);
  }
  return ll;
}

LossValue loss(const DecompositionTree& tree,
               std::span<const double> head_probs, double target,
               const LossWeights& weights, std::span<double> head_grad) {
  check_heads(tree, head_probs);
  if (head_grad.size() != tree.num_heads()) {
    throw Error(ErrorKind::kInvalidArgument, "gradient buffer size mismatch");
  }
  if (!std::isfinite(target)) {
    throw Error(ErrorKind::kData, "target watch time is not finite");
  }
  const auto nodes = tree.nodes();
  const auto values = tree.leaf_values();
  const std::size_t m = tree.leaf_count();

  std::vector<double> mass;
  node_masses(tree, head_probs, mass);
  double mean = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    mean += mass[tree.leaf_node(k)] * values[k];
  }
  double var = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double d = values[k] - mean;
    var += mass[tree.leaf_node(k)] * d * d;
  }
  var = std::max(var, 0.0);
  const double sd = std::sqrt(var + kStdSmoothing);
  const double err = mean - target;

  const std::size_t leaf = tree.scale().interval_of(target);
  LossValue value;
  value.nll = -log_likelihood(tree, head_probs, leaf);
  value.std_dev = sd;
  value.abs_error = std::abs(err);
  value.total = weights.alpha1 * value.nll + weights.alpha2 * sd +
                weights.alpha3 * err * err;

  // d total / d leaf probability for the moment terms. Any per-leaf constant
  // offset cancels because leaf probabilities always sum to one.
  std::vector<double> up(nodes.size(), 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const double d = values[k] - mean;
    up[tree.leaf_node(k)] = weights.alpha2 * d * d / (2.0 * sd) +
                            weights.alpha3 * 2.0 * err * values[k];
  }
  // Bottom-up: up[n] becomes the conditional expectation of the leaf
  // gradient below n, and d/dp_h = mass[n] * (up[right] - up[left]).
  std::fill(head_grad.begin(), head_grad.end(), 0.0);
  const auto order = tree.top_down_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const TreeNode& node = nodes[*it];
    const auto [left, right] = *node.children;
    const double p = head_probs[*node.head];
    head_grad[*node.head] = mass[*it] * (up[right] - up[left]);
    up[*it] = (1.0 - p) * up[left] + p * up[right];
  }
  if (weights.alpha1 != 0.0) {
    for (const PathStep& step : tree.path(leaf)) {
      const double p = head_probs[step.head];
      head_grad[step.head] += step.label == 1 ? -weights.alpha1 / p
                                              : weights.alpha1 / (1.0 - p);
    }
  }
  return value;
}

LossResult loss(const DecompositionTree& tree,
                std::span<const double> head_probs, double target,
                const LossWeights& weights) {
  LossResult result;
  result.gradient.resize(tree.num_heads());
  result.value = loss(tree, head_probs, target, weights, result.gradient);
  return result;
}

std::string to_json_line(const EpochRecord& record) {
  nlohmann::ordered_json j;
  j["epoch"] = record.epoch;
  j["nll"] = record.nll;
  j["std_term"] = record.std_term;
  j["mse_term"] = record.mse_term;
  j["total"] = record.total;
  return j.dump();
}

TrainLog train(MultiHeadNet& net, std::span<const DecompositionTree> trees,
               const Matrix& features, std::span<const double> targets,
               std::span<const std::size_t> tree_index,
               const TrainConfig& config) {
  config.validate();
  if (trees.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "no decomposition tree given");
  }
  for (const auto& tree : trees) {
    if (tree.num_heads() != net.num_heads()) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("tree has {} heads but the net has {}",
                              tree.num_heads(), net.num_heads()));
    }
  }
  const std::size_t n = features.rows();
  if (targets.size() != n || (!tree_index.empty() && tree_index.size() != n)) {
    throw Error(ErrorKind::kInvalidArgument,
                "features, targets and tree indices disagree in length");
  }
  if (features.cols() != net.input_dim()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("net expects {} features, data has {}",
                            net.input_dim(), features.cols()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(targets[i])) {
      throw Error(ErrorKind::kData,
                  fmt::format("watch time in row {} is not finite", i));
    }
    if (!tree_index.empty() && tree_index[i] >= trees.size()) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("row {} refers to tree {}", i, tree_index[i]));
    }
  }

  return detail::fit(
      net, features, config,
      [&](std::size_t i, std::span<const double> probs,
          std::span<double> grad) {
        const auto& tree = trees[tree_index.empty() ? 0 : tree_index[i]];
        const LossValue v = loss(tree, probs, targets[i], config.weights, grad);
        return detail::SampleLoss{v.total, v.nll, v.std_dev, v.abs_error};
      });
}

TrainLog train(MultiHeadNet& net, const DecompositionTree& tree,
               const Matrix& features, std::span<const double> targets,
               const TrainConfig& config) {
  return train(net, std::span<const DecompositionTree>(&tree, 1), features,
               targets, {}, config);
}

TpmModel train_tpm(const Dataset& data, const TpmConfig& config,
                   const NetConfig& net_template,
                   const TrainConfig& train_config, TrainLog* log) {
  data.validate();
  const OrdinalScale scale = build_scale(data.watch_time, config.num_leaves);
  DecompositionTree tree = build_tree(scale, config.tree_kind);
  if (config.empirical_leaf_means) {
    tree.set_leaf_values(empirical_leaf_means(tree, data.watch_time));
  }
  NetConfig net_config = net_template;
  net_config.input_dim = data.num_features();
  net_config.num_heads = tree.num_heads();
  TpmModel model{std::move(tree), MultiHeadNet(net_config)};
  TrainLog result = train(model.net, model.tree, data.features,
                          data.watch_time, train_config);
  if (log) *log = std::move(result);
  return model;
}

LeafDistribution predict(const DecompositionTree& tree,
                         const MultiHeadNet& net, std::span<const double> x) {
  return leaf_distribution(tree, net.forward(x));
}

double ensemble_predict(std::span<const TreeModelRef> models,
                        std::span<const double> prior,
                        std::span<const double> x) {
  if (models.size() != prior.size() || models.empty()) {
    throw Error(ErrorKind::kInvalidArgument,
                "ensemble prior length must match the number of trees");
  }
  const double total = std::accumulate(prior.begin(), prior.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::kInvalidArgument, "ensemble prior must sum to 1");
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    mean += prior[i] * predict(*models[i].tree, *models[i].net, x).expectation;
  }
  return mean;
}

}  // namespace tpm
