#pragma once

// Tree-based progressive regression: turns per-node conditional branch
// probabilities into a distribution over rank intervals, scores it with the
// likelihood / spread / regression objective, and trains the multi-head net.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tpm/dataset.hpp"
#include "tpm/matrix.hpp"
#include "tpm/net.hpp"
#include "tpm/ranks.hpp"

namespace tpm {

struct LeafDistribution {
  std::vector<double> probs;
  double expectation = 0.0;
  double variance = 0.0;

  double std_dev() const;
};

// Weights of the log-likelihood, standard-deviation and regression terms.
struct LossWeights {
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double alpha3 = 1.0;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct TrainConfig {
  LossWeights weights;
  std::size_t batch_size = 256;
  std::size_t epochs = 20;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;  // drives the per-epoch shuffle

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Leaf k receives the product of branch probabilities along its path: p_h
// when turning right at head h, 1 - p_h when turning left. Expectation and
// variance use the tree's leaf values.
LeafDistribution leaf_distribution(const DecompositionTree& tree,
                                   std::span<const double> head_probs);
void leaf_distribution(const DecompositionTree& tree,
                       std::span<const double> head_probs,
                       LeafDistribution& out);

// Sum of log branch probabilities along the path to `leaf`.
double log_likelihood(const DecompositionTree& tree,
                      std::span<const double> head_probs, std::size_t leaf);

// Per-sample objective, minimized:
//   alpha1 * (-log p(leaf(T))) + alpha2 * sqrt(Var + 1e-12)
//     + alpha3 * (E - T)^2
struct LossValue {
  double total = 0.0;
  double nll = 0.0;
  double std_dev = 0.0;
  double abs_error = 0.0;  // |E - T|, the reported regression term
};

struct LossResult {
  LossValue value;
  std::vector<double> gradient;  // d total / d head probability
};

LossResult loss(const DecompositionTree& tree,
                std::span<const double> head_probs, double target,
                const LossWeights& weights);
// Allocation-light variant; `head_grad` must have num_heads entries and is
// overwritten.
LossValue loss(const DecompositionTree& tree,
               std::span<const double> head_probs, double target,
               const LossWeights& weights, std::span<double> head_grad);

struct EpochRecord {
  std::size_t epoch = 0;
  double nll = 0.0;
  double std_term = 0.0;
  double mse_term = 0.0;
  double total = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using TrainLog = std::vector<EpochRecord>;

// One JSON object per line: epoch, nll, std_term, mse_term, total.
std::string to_json_line(const EpochRecord& record);

// Mini-batch training. Sample i is scored against trees[tree_index[i]]; an
// empty `tree_index` means every sample uses trees[0]. All trees must have
// the same number of heads as the net. Throws Error(kDivergence) as soon as
// a batch produces a non-finite loss.
TrainLog train(MultiHeadNet& net, std::span<const DecompositionTree> trees,
               const Matrix& features, std::span<const double> targets,
               std::span<const std::size_t> tree_index,
               const TrainConfig& config);

TrainLog train(MultiHeadNet& net, const DecompositionTree& tree,
               const Matrix& features, std::span<const double> targets,
               const TrainConfig& config);

LeafDistribution predict(const DecompositionTree& tree,
                         const MultiHeadNet& net, std::span<const double> x);

// A trained single-tree model: the decomposition plus its classifier net.
struct TpmModel {
  DecompositionTree tree;
  MultiHeadNet net;

  LeafDistribution predict(std::span<const double> x) const {
    return tpm::predict(tree, net, x);
  }
  friend bool operator==(const TpmModel&, const TpmModel&) = default;
};

struct TpmConfig {
  std::size_t num_leaves = 32;
  TreeKind tree_kind = TreeKind::kBalanced;
  // Replace leaf midpoints with the mean training watch time per leaf.
  bool empirical_leaf_means = false;

  friend bool operator==(const TpmConfig&, const TpmConfig&) = default;
};

// Quantile scale and tree from the training labels, then train a fresh net.
// `net_template` supplies hidden sizes, activation and seed; input_dim and
// num_heads are derived from the data and the tree.
TpmModel train_tpm(const Dataset& data, const TpmConfig& config,
                   const NetConfig& net_template,
                   const TrainConfig& train_config, TrainLog* log = nullptr);

struct TreeModelRef {
  const DecompositionTree* tree = nullptr;
  const MultiHeadNet* net = nullptr;
};

// Prior-weighted mixture of per-tree expectations.
double ensemble_predict(std::span<const TreeModelRef> models,
                        std::span<const double> prior,
                        std::span<const double> x);

}  // namespace tpm
