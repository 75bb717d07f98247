#include "tpm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "fit.hpp"
#include "tpm/error.hpp"

namespace tpm {

double wlr_odds(double p) {
  const double clamped = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
  return clamped / (1.0 - clamped);
}

double WlrModel::predict(std::span<const double> x) const {
  return wlr_odds(net.forward(x)[0]);
}

WlrModel wlr_train(const Dataset& data, const WlrConfig& config,
                   const NetConfig& net_template,
                   const TrainConfig& train_config, TrainLog* log) {
  data.validate();
  if (data.size() == 0) throw Error(ErrorKind::kData, "empty training set");
  if (!(config.negative_quantile >= 0.0 && config.negative_quantile < 1.0)) {
    throw Error(ErrorKind::kConfig, "negative_quantile must lie in [0, 1)");
  }
  std::vector<double> sorted = data.watch_time;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted_quantile(sorted, config.negative_quantile);

  std::size_t positives = 0;
  for (double t : data.watch_time) positives += t > threshold ? 1 : 0;
  if (positives == 0 || positives == data.size()) {
    throw Error(ErrorKind::kData,
                "all samples fall in one class after thresholding");
  }

  NetConfig net_config = net_template;
  net_config.input_dim = data.num_features();
  net_config.num_heads = 1;
  WlrModel model{MultiHeadNet(net_config), threshold};

  TrainLog result = detail::fit(
      model.net, data.features, train_config,
      [&](std::size_t i, std::span<const double> probs,
          std::span<double> grad) {
        const double t = data.watch_time[i];
        const double p = probs[0];
        double ce = 0.0;
        if (t > threshold) {
          ce = -t * std::log(p);
          grad[0] = -t / p;
        } else {
          ce = -std::log(1.0 - p);
          grad[0] = 1.0 / (1.0 - p);
        }
        return detail::SampleLoss{ce, ce, 0.0, 0.0};
      });
  if (log) *log = std::move(result);
  return model;
}

std::vector<double> quantile_labels(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<double> labels(n, 0.5);
  if (n <= 1) return labels;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  const double denom = static_cast<double>(n - 1);
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi + 1 < n && values[order[hi + 1]] == values[order[lo]]) ++hi;
    const double rank = 0.5 * static_cast<double>(lo + hi);
    for (std::size_t r = lo; r <= hi; ++r) labels[order[r]] = rank / denom;
    lo = hi + 1;
  }
  return labels;
}

double D2qModel::watch_time_at(std::size_t group, double quantile) const {
  if (group >= group_targets.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("unknown duration group {}", group));
  }
  return sorted_quantile(group_targets[group], std::clamp(quantile, 0.0, 1.0));
}

double D2qModel::predict_group(std::span<const double> x,
                               std::size_t group) const {
  if (group >= partition.num_groups()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("unknown duration group {}", group));
  }
  return watch_time_at(group, net.forward(x)[group]);
}

double D2qModel::predict(std::span<const double> x, double duration) const {
  if (!std::isfinite(duration)) {
    throw Error(ErrorKind::kData, "duration must be finite");
  }
  return predict_group(x, partition.group_of(duration));
}

D2qModel d2q_train(const Dataset& data, std::size_t num_groups,
                   const NetConfig& net_template,
                   const TrainConfig& train_config, TrainLog* log) {
  data.validate();
  if (!data.duration) {
    throw Error(ErrorKind::kData, "D2Q needs a duration column");
  }
  ConfounderPartition partition = build_partition(*data.duration, num_groups);
  const std::size_t groups = partition.num_groups();

  std::vector<std::size_t> group(data.size());
  std::vector<std::vector<std::size_t>> members(groups);
  for (std::size_t i = 0; i < data.size(); ++i) {
    group[i] = partition.group_of((*data.duration)[i]);
    members[group[i]].push_back(i);
  }
  std::vector<double> labels(data.size());
  std::vector<std::vector<double>> group_targets(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    if (members[g].empty()) {
      throw Error(ErrorKind::kData,
                  fmt::format("duration group {} is empty", g));
    }
    auto& targets = group_targets[g];
    for (std::size_t i : members[g]) targets.push_back(data.watch_time[i]);
    const auto q = quantile_labels(targets);
    for (std::size_t r = 0; r < members[g].size(); ++r) {
      labels[members[g][r]] = q[r];
    }
    std::sort(targets.begin(), targets.end());
  }

  NetConfig net_config = net_template;
  net_config.input_dim = data.num_features();
  net_config.num_heads = groups;
  D2qModel model{std::move(partition), MultiHeadNet(net_config),
                 std::move(group_targets)};

  TrainLog result = detail::fit(
      model.net, data.features, train_config,
      [&](std::size_t i, std::span<const double> probs,
          std::span<double> grad) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double err = probs[group[i]] - labels[i];
        grad[group[i]] = 2.0 * err;
        return detail::SampleLoss{err * err, err * err, 0.0, std::abs(err)};
      });
  if (log) *log = std::move(result);
  return model;
}

double or_expectation(const OrdinalScale& scale,
                      std::span<const double> head_probs) {
  if (head_probs.size() != scale.num_intervals()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("expected {} ordinal heads, got {}",
                            scale.num_intervals(), head_probs.size()));
  }
  double value = scale.lower();
  for (std::size_t k = 0; k < head_probs.size(); ++k) {
    value += std::clamp(head_probs[k], 0.0, 1.0) * scale.width(k);
  }
  return std::clamp(value, scale.lower(), scale.upper());
}

double OrModel::predict(std::span<const double> x,
                        std::optional<double> confounder) const {
  if (!partition) return or_expectation(scale, net.forward(x));
  if (!confounder) {
    throw Error(ErrorKind::kInvalidArgument,
                "this ordinal model needs the confounder value");
  }
  const auto input = detail::append_one_hot(
      x, partition->group_of(*confounder), partition->num_groups());
  return or_expectation(scale, net.forward(input));
}

OrModel or_train(const Dataset& data, const OrdinalScale& scale,
                 const NetConfig& net_template,
                 const TrainConfig& train_config, std::size_t num_groups,
                 TrainLog* log) {
  data.validate();
  std::optional<ConfounderPartition> partition;
  Matrix inputs = data.features;
  if (num_groups > 1) {
    if (!data.duration) {
      throw Error(ErrorKind::kData,
                  "grouped ordinal regression needs a duration column");
    }
    partition = build_partition(*data.duration, num_groups);
    std::vector<std::size_t> group(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      group[i] = partition->group_of((*data.duration)[i]);
    }
    inputs = detail::append_one_hot(data.features, group, num_groups);
  }

  NetConfig net_config = net_template;
  net_config.input_dim = inputs.cols();
  net_config.num_heads = scale.num_intervals();
  OrModel model{scale, MultiHeadNet(net_config), std::move(partition)};

  const auto bounds = scale.boundaries();
  TrainLog result = detail::fit(
      model.net, inputs, train_config,
      [&](std::size_t i, std::span<const double> probs,
          std::span<double> grad) {
        const double t = data.watch_time[i];
        double ce = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k) {
          const double p = probs[k];
          if (t > bounds[k]) {
            ce -= std::log(p);
            grad[k] = -1.0 / p;
          } else {
            ce -= std::log(1.0 - p);
            grad[k] = 1.0 / (1.0 - p);
          }
        }
        const double err = or_expectation(scale, probs) - t;
        return detail::SampleLoss{ce, ce, 0.0, std::abs(err)};
      });
  if (log) *log = std::move(result);
  return model;
}

}  // namespace tpm
