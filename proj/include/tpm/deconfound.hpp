#pragma once

// Backdoor adjustment over a scalar confounder (video duration by default).
// The confounder scale is cut into equal-frequency groups; the model is
// trained conditioned on the group and, in "do" mode, predictions are
// averaged over the empirical group prior:
//
//   E(T | do(X)) = sum_d P(D = d) * E(T | X, D = d)

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "tpm/dataset.hpp"
#include "tpm/net.hpp"
#include "tpm/progressive.hpp"
#include "tpm/ranks.hpp"

namespace tpm {

class ConfounderPartition {
 public:
  ConfounderPartition() = default;
  // `boundaries` has num_groups + 1 strictly increasing entries; `prior` has
  // num_groups entries summing to one.
  ConfounderPartition(std::vector<double> boundaries, std::vector<double> prior);

  std::size_t num_groups() const { return prior_.size(); }
  std::span<const double> boundaries() const { return boundaries_; }
  std::span<const double> prior() const { return prior_; }

  // Values below the first or above the last boundary clamp to the edge
  // groups. Throws on NaN.
  std::size_t group_of(double value) const;

  friend bool operator==(const ConfounderPartition&,
                         const ConfounderPartition&) = default;

 private:
  std::vector<double> boundaries_;
  std::vector<double> prior_;
};

// Equal-frequency grouping; prior = group counts / N.
ConfounderPartition build_partition(std::span<const double> values,
                                    std::size_t num_groups);

enum class Conditioning {
  kSharedNet,     // one net, group id appended as a one-hot input
  kSeparateNets,  // one independent net per group
};
enum class GroupScale { kPerGroup, kGlobal };
enum class PredictMode { kConditional, kDo };

std::string_view to_string(Conditioning c);
std::string_view to_string(GroupScale s);
std::string_view to_string(PredictMode m);
Conditioning conditioning_from_string(std::string_view name);
GroupScale group_scale_from_string(std::string_view name);
PredictMode predict_mode_from_string(std::string_view name);

struct DeconfoundConfig {
  std::size_t num_groups = 32;
  std::size_t num_leaves = 32;
  TreeKind tree_kind = TreeKind::kBalanced;
  Conditioning conditioning = Conditioning::kSharedNet;
  GroupScale scale = GroupScale::kPerGroup;
  bool empirical_leaf_means = false;

  friend bool operator==(const DeconfoundConfig&,
                         const DeconfoundConfig&) = default;
};

class DeconfoundedModel {
 public:
  DeconfoundedModel() = default;
  DeconfoundedModel(ConfounderPartition partition, Conditioning conditioning,
                    std::vector<DecompositionTree> trees,
                    std::vector<MultiHeadNet> nets);

  const ConfounderPartition& partition() const { return partition_; }
  Conditioning conditioning() const { return conditioning_; }
  std::span<const DecompositionTree> trees() const { return trees_; }
  std::span<const MultiHeadNet> nets() const { return nets_; }
  std::size_t num_groups() const { return partition_.num_groups(); }

  // p(T | X, D = group). Throws Error(kInvalidArgument) for an unknown group.
  LeafDistribution predict_group(std::span<const double> x,
                                 std::size_t group) const;

  // E(T | X, D = group_of(confounder)).
  double predict_conditional(std::span<const double> x,
                             double confounder) const;

  // sum_d P(D = d) E(T | X, D = d). Never looks at the sample's confounder.
  double predict_do(std::span<const double> x) const;

  struct Moments {
    double expectation = 0.0;
    double variance = 0.0;
  };
  // Mean and variance of the prediction in either mode; in "do" mode the
  // variance is that of the prior-weighted mixture.
  Moments predict_moments(std::span<const double> x, double confounder,
                          PredictMode mode) const;

  friend bool operator==(const DeconfoundedModel&,
                         const DeconfoundedModel&) = default;

 private:
  ConfounderPartition partition_;
  Conditioning conditioning_ = Conditioning::kSharedNet;
  std::vector<DecompositionTree> trees_;  // one per group
  std::vector<MultiHeadNet> nets_;        // one, or one per group
};

// `net_template` supplies hidden sizes, activation and seed; its input_dim
// and num_heads are derived here. With a single group this reduces exactly
// to plain single-tree training with the same seeds.
DeconfoundedModel train_deconfounded(const Dataset& data,
                                     std::span<const double> confounder,
                                     const DeconfoundConfig& config,
                                     const NetConfig& net_template,
                                     const TrainConfig& train_config,
                                     TrainLog* log = nullptr);

}  // namespace tpm
