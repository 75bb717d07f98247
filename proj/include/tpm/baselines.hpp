#pragma once

// Comparison methods built on the same trunk as the tree model; only the
// output heads and their losses differ.
//
//  - WLR: one head trained with watch-time weighted cross-entropy; the odds
//    p / (1 - p) approximate watch time.
//  - D2Q: duration groups, one head per group regressing the within-group
//    quantile of watch time, mapped back through the group's empirical
//    quantile function.
//  - OR: one head per rank boundary predicting P(T > g_k), decoded with the
//    survival sum g_0 + sum_k P(T > g_k) * (g_{k+1} - g_k).

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tpm/dataset.hpp"
#include "tpm/deconfound.hpp"
#include "tpm/net.hpp"
#include "tpm/progressive.hpp"
#include "tpm/ranks.hpp"

namespace tpm {

// ---- WLR -------------------------------------------------------------------

struct WlrConfig {
  // Samples with watch time <= this quantile of the training labels are
  // negatives.
  double negative_quantile = 0.25;

  friend bool operator==(const WlrConfig&, const WlrConfig&) = default;
};

double wlr_odds(double p);

struct WlrModel {
  MultiHeadNet net;
  double threshold = 0.0;

  double predict(std::span<const double> x) const;
  friend bool operator==(const WlrModel&, const WlrModel&) = default;
};

WlrModel wlr_train(const Dataset& data, const WlrConfig& config,
                   const NetConfig& net_template,
                   const TrainConfig& train_config, TrainLog* log = nullptr);

// ---- D2Q -------------------------------------------------------------------

// Within-sample empirical quantile of every value: rank / (n - 1) with ties
// sharing their average rank; a single value gets 0.5.
std::vector<double> quantile_labels(std::span<const double> values);

struct D2qModel {
  ConfounderPartition partition;
  MultiHeadNet net;  // one head per group
  std::vector<std::vector<double>> group_targets;  // sorted, per group

  // Maps a quantile in [0, 1] back to seconds within `group`.
  double watch_time_at(std::size_t group, double quantile) const;
  double predict_group(std::span<const double> x, std::size_t group) const;
  double predict(std::span<const double> x, double duration) const;

  friend bool operator==(const D2qModel&, const D2qModel&) = default;
};

D2qModel d2q_train(const Dataset& data, std::size_t num_groups,
                   const NetConfig& net_template,
                   const TrainConfig& train_config, TrainLog* log = nullptr);

// ---- OR --------------------------------------------------------------------

// head_probs[k] = P(T > g_k) for k = 0 .. m-1.
double or_expectation(const OrdinalScale& scale,
                      std::span<const double> head_probs);

struct OrModel {
  OrdinalScale scale;
  MultiHeadNet net;  // one head per interval
  // Present when the group id is appended to the features.
  std::optional<ConfounderPartition> partition;

  // `confounder` is required when a partition is present.
  double predict(std::span<const double> x,
                 std::optional<double> confounder = std::nullopt) const;

  friend bool operator==(const OrModel&, const OrModel&) = default;
};

// With num_groups > 1 the data must carry durations; the group id is
// appended as a one-hot input exactly as for the shared-net tree model.
OrModel or_train(const Dataset& data, const OrdinalScale& scale,
                 const NetConfig& net_template,
                 const TrainConfig& train_config, std::size_t num_groups = 1,
                 TrainLog* log = nullptr);

}  // namespace tpm
