#include "tpm/deconfound.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "fit.hpp"
#include "tpm/error.hpp"

namespace tpm {

ConfounderPartition::ConfounderPartition(std::vector<double> boundaries,
                                         std::vector<double> prior)
    : boundaries_(std::move(boundaries)), prior_(std::move(prior)) {
  if (prior_.empty() || boundaries_.size() != prior_.size() + 1) {
    throw Error(ErrorKind::kInvalidArgument,
                "partition needs num_groups + 1 boundaries");
  }
  for (std::size_t i = 0; i < boundaries_.size(); ++i) {
    if (!std::isfinite(boundaries_[i]) ||
        (i > 0 && !(boundaries_[i] > boundaries_[i - 1]))) {
      throw Error(ErrorKind::kInvalidArgument,
                  "partition boundaries must be finite and strictly "
                  "increasing");
    }
  }
  double total = 0.0;
  for (double p : prior_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::kInvalidArgument,
                  "group prior entries must lie in [0, 1]");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::kInvalidArgument, "group prior must sum to 1");
  }
}

std::size_t ConfounderPartition::group_of(double value) const {
  if (std::isnan(value)) throw Error(ErrorKind::kData, "confounder is NaN");
  if (value < boundaries_.front()) return 0;
  if (value >= boundaries_.back()) return num_groups() - 1;
  auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), value);
  return static_cast<std::size_t>(it - boundaries_.begin()) - 1;
}

ConfounderPartition build_partition(std::span<const double> values,
                                    std::size_t num_groups) {
  if (num_groups < 1) {
    throw Error(ErrorKind::kInvalidArgument, "num_groups must be >= 1");
  }
  if (values.empty()) {
    throw Error(ErrorKind::kData, "cannot partition an empty confounder");
  }
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kData, "confounder values must be finite");
    }
  }
  std::sort(sorted.begin(), sorted.end());
  std::size_t distinct = 1;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i] != sorted[i - 1]) ++distinct;
  }
  if (distinct < num_groups) {
    throw Error(ErrorKind::kData,
                fmt::format("{} distinct confounder values for {} groups",
                            distinct, num_groups));
  }
  std::vector<double> boundaries(num_groups + 1);
  for (std::size_t g = 0; g <= num_groups; ++g) {
    boundaries[g] = sorted_quantile(
        sorted, static_cast<double>(g) / static_cast<double>(num_groups));
  }
  for (std::size_t g = 1; g <= num_groups; ++g) {
    if (boundaries[g] <= boundaries[g - 1]) {
      boundaries[g] = std::nextafter(boundaries[g - 1],
                                     std::numeric_limits<double>::infinity());
    }
  }
  // Build the lookup with a placeholder prior, then count.
  std::vector<double> uniform(num_groups, 1.0 / static_cast<double>(num_groups));
  std::vector<double> counts(num_groups, 0.0);
  {
    ConfounderPartition lookup(boundaries, uniform);
    for (double v : values) counts[lookup.group_of(v)] += 1.0;
  }
  const double n = static_cast<double>(values.size());
  for (double& c : counts) c /= n;
  return ConfounderPartition(std::move(boundaries), std::move(counts));
}

std::string_view to_string(Conditioning c) {
  return c == Conditioning::kSharedNet ? "shared" : "separate";
}
std::string_view to_string(GroupScale s) {
  return s == GroupScale::kPerGroup ? "per_group" : "global";
}
std::string_view to_string(PredictMode m) {
  return m == PredictMode::kConditional ? "conditional" : "do";
}

Conditioning conditioning_from_string(std::string_view name) {
  if (name == "shared") return Conditioning::kSharedNet;
  if (name == "separate") return Conditioning::kSeparateNets;
  throw Error(ErrorKind::kConfig,
              fmt::format("unknown conditioning '{}' (expected "
                          "shared|separate)",
                          name));
}

GroupScale group_scale_from_string(std::string_view name) {
  if (name == "per_group") return GroupScale::kPerGroup;
  if (name == "global") return GroupScale::kGlobal;
  throw Error(ErrorKind::kConfig,
              fmt::format("unknown group scale '{}' (expected "
                          "per_group|global)",
                          name));
}

PredictMode predict_mode_from_string(std::string_view name) {
  if (name == "conditional") return PredictMode::kConditional;
  if (name == "do") return PredictMode::kDo;
  throw Error(ErrorKind::kConfig,
              fmt::format("unknown predict mode '{}' (expected "
                          "conditional|do)",
                          name));
}

DeconfoundedModel::DeconfoundedModel(ConfounderPartition partition,
                                     Conditioning conditioning,
                                     std::vector<DecompositionTree> trees,
                                     std::vector<MultiHeadNet> nets)
    : partition_(std::move(partition)),
      conditioning_(conditioning),
      trees_(std::move(trees)),
      nets_(std::move(nets)) {
  const std::size_t groups = partition_.num_groups();
  const std::size_t expected_nets =
      conditioning_ == Conditioning::kSharedNet ? 1 : groups;
  if (trees_.size() != groups || nets_.size() != expected_nets) {
    throw Error(ErrorKind::kModelFormat,
                fmt::format("deconfounded model has {} trees and {} nets for "
                            "{} groups",
                            trees_.size(), nets_.size(), groups));
  }
  for (std::size_t g = 0; g < groups; ++g) {
    const auto& net = nets_[conditioning_ == Conditioning::kSharedNet ? 0 : g];
    if (trees_[g].num_heads() != net.num_heads()) {
      throw Error(ErrorKind::kModelFormat,
                  fmt::format("group {} tree does not match its net", g));
    }
  }
}

LeafDistribution DeconfoundedModel::predict_group(std::span<const double> x,
                                                  std::size_t group) const {
  if (group >= num_groups()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("unknown group {} (model has {})", group,
                            num_groups()));
  }
  if (conditioning_ == Conditioning::kSeparateNets) {
    return predict(trees_[group], nets_[group], x);
  }
  const auto input = detail::append_one_hot(x, group, num_groups());
  return predict(trees_[group], nets_[0], input);
}

double DeconfoundedModel::predict_conditional(std::span<const double> x,
                                              double confounder) const {
  return predict_group(x, partition_.group_of(confounder)).expectation;
}

double DeconfoundedModel::predict_do(std::span<const double> x) const {
  const auto prior = partition_.prior();
  double mean = 0.0;
  for (std::size_t g = 0; g < num_groups(); ++g) {
    mean += prior[g] * predict_group(x, g).expectation;
  }
  return mean;
}

DeconfoundedModel::Moments DeconfoundedModel::predict_moments(
    std::span<const double> x, double confounder, PredictMode mode) const {
  if (mode == PredictMode::kConditional) {
    const auto dist = predict_group(x, partition_.group_of(confounder));
    return {dist.expectation, dist.variance};
  }
  const auto prior = partition_.prior();
  double mean = 0.0;
  double second = 0.0;
  for (std::size_t g = 0; g < num_groups(); ++g) {
    const auto dist = predict_group(x, g);
    mean += prior[g] * dist.expectation;
    second += prior[g] * (dist.variance + dist.expectation * dist.expectation);
  }
  return {mean, std::max(second - mean * mean, 0.0)};
}

namespace {

DecompositionTree group_tree(const OrdinalScale& scale,
                             const DeconfoundConfig& config,
                             std::span<const double> targets) {
  DecompositionTree tree = build_tree(scale, config.tree_kind);
  if (config.empirical_leaf_means) {
    tree.set_leaf_values(empirical_leaf_means(tree, targets));
  }
  return tree;
}

// Per-epoch sample-weighted average of several group logs.
TrainLog merge_logs(const std::vector<TrainLog>& logs,
                    const std::vector<std::size_t>& sizes) {
  TrainLog merged;
  if (logs.empty() || logs.front().empty()) return merged;
  const double n = static_cast<double>(
      std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
  merged.resize(logs.front().size());
  for (std::size_t e = 0; e < merged.size(); ++e) {
    merged[e].epoch = e + 1;
    for (std::size_t g = 0; g < logs.size(); ++g) {
      const double w = static_cast<double>(sizes[g]) / n;
      merged[e].nll += w * logs[g][e].nll;
      merged[e].std_term += w * logs[g][e].std_term;
      merged[e].mse_term += w * logs[g][e].mse_term;
      merged[e].total += w * logs[g][e].total;
    }
  }
  return merged;
}

}  // namespace

DeconfoundedModel train_deconfounded(const Dataset& data,
                                     std::span<const double> confounder,
                                     const DeconfoundConfig& config,
                                     const NetConfig& net_template,
                                     const TrainConfig& train_config,
                                     TrainLog* log) {
  data.validate();
  if (confounder.size() != data.size()) {
    throw Error(ErrorKind::kData,
                "every sample needs exactly one confounder value");
  }
  ConfounderPartition partition =
      build_partition(confounder, config.num_groups);
  const std::size_t groups = partition.num_groups();

  std::vector<std::size_t> group(data.size());
  std::vector<std::vector<std::size_t>> members(groups);
  for (std::size_t i = 0; i < data.size(); ++i) {
    group[i] = partition.group_of(confounder[i]);
    members[group[i]].push_back(i);
  }
  for (std::size_t g = 0; g < groups; ++g) {
    if (members[g].empty()) {
      throw Error(ErrorKind::kData,
                  fmt::format("confounder group {} is empty", g));
    }
  }

  std::vector<DecompositionTree> trees;
  trees.reserve(groups);
  if (config.scale == GroupScale::kGlobal) {
    const OrdinalScale scale = build_scale(data.watch_time, config.num_leaves);
    for (std::size_t g = 0; g < groups; ++g) {
      trees.push_back(group_tree(scale, config, data.watch_time));
    }
  } else {
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<double> targets;
      targets.reserve(members[g].size());
      for (std::size_t i : members[g]) targets.push_back(data.watch_time[i]);
      try {
        trees.push_back(group_tree(build_scale(targets, config.num_leaves),
                                   config, targets));
      } catch (const Error& e) {
        throw Error(e.kind(), fmt::format("group {}: {}", g, e.what()));
      }
    }
  }

  std::vector<MultiHeadNet> nets;
  if (config.conditioning == Conditioning::kSharedNet) {
    NetConfig net_config = net_template;
    net_config.input_dim =
        data.num_features() + (groups > 1 ? groups : std::size_t{0});
    net_config.num_heads = trees.front().num_heads();
    nets.emplace_back(net_config);
    const Matrix inputs = detail::append_one_hot(data.features, group, groups);
    TrainLog result = train(nets.front(), trees, inputs, data.watch_time,
                            group, train_config);
    if (log) *log = std::move(result);
  } else {
    std::vector<TrainLog> logs;
    std::vector<std::size_t> sizes;
    for (std::size_t g = 0; g < groups; ++g) {
      const Dataset part = subset(data, members[g]);
      NetConfig net_config = net_template;
      net_config.input_dim = data.num_features();
      net_config.num_heads = trees[g].num_heads();
      net_config.seed = net_template.seed + g;
      TrainConfig group_train = train_config;
      group_train.seed = train_config.seed + g;
      nets.emplace_back(net_config);
      logs.push_back(train(nets.back(), trees[g], part.features,
                           part.watch_time, group_train));
      sizes.push_back(part.size());
    }
    if (log) *log = groups == 1 ? logs.front() : merge_logs(logs, sizes);
  }
  return DeconfoundedModel(std::move(partition), config.conditioning,
                           std::move(trees), std::move(nets));
}

}  // namespace tpm
