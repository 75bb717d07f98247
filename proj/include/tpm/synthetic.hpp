#pragma once

// Synthetic watch-time data with known ground truth.
//
// A duration level D is drawn uniformly from `duration_levels` categories and
// expressed as a duration in seconds. Features are X = Z + confounding_x * c(D)
// with Z ~ N(0, I) and c(D) in [-1, 1]. Watch time has a multiplicative mean
// and additive, heteroskedastic Gaussian noise clamped at zero:
//
//   g(X, D) = base * exp(0.5 * s(X) + confounding_t * c(D))
//   T = max(0, g + sigma * eps),  sigma = noise * g * (0.3 + 1.4 * logistic(1.5 x_3))
//
// where s(X) is a fixed linear score on the first three features. The noise
// scale varies with the fourth feature, so the data is heteroskedastic
// whenever noise > 0. The returned true mean accounts for the clamp.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tpm/dataset.hpp"

namespace tpm {

struct SyntheticSpec {
  std::size_t rows = 10'000;
  std::size_t input_dim = 8;
  double noise = 0.5;
  double confounding_x = 0.0;  // strength of D -> X
  double confounding_t = 0.0;  // strength of D -> T
  std::size_t duration_levels = 8;
  double base_watch_time = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  Dataset data;
  std::vector<double> true_mean;    // E(T | X, D)
  std::vector<std::size_t> level;   // duration category per row
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Noise-free data whose rank is a deterministic function of the features:
// row r belongs to class k = r % num_classes, its features are the +-1 bits
// of k (padded with `extra_features` zeros) and its watch time is
// first_value + k * spacing.
Dataset generate_separable(std::size_t num_classes, std::size_t rows_per_class,
                           double first_value = 10.0, double spacing = 5.0,
                           std::size_t extra_features = 0);

}  // namespace tpm
