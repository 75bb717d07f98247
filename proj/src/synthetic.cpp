#include "tpm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "tpm/error.hpp"

namespace tpm {
namespace {

constexpr double kSecondsPerLevel = 15.0;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// E[max(0, Y)] for Y ~ N(mu, sigma^2).
double clamped_normal_mean(double mu, double sigma) {
  if (sigma <= 0.0) return std::max(mu, 0.0);
  const double z = mu / sigma;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  return mu * cdf + sigma * pdf;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (rows < 1) throw Error(ErrorKind::kConfig, "synthetic rows must be >= 1");
  if (input_dim < 4) {
    throw Error(ErrorKind::kConfig, "synthetic input_dim must be >= 4");
  }
  if (!(noise >= 0.0)) {
    throw Error(ErrorKind::kConfig, "synthetic noise must be >= 0");
  }
  if (duration_levels < 1) {
    throw Error(ErrorKind::kConfig, "duration_levels must be >= 1");
  }
  if (!(base_watch_time > 0.0) || !std::isfinite(confounding_x) ||
      !std::isfinite(confounding_t)) {
    throw Error(ErrorKind::kConfig, "invalid synthetic generator parameters");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> level_dist(
      0, spec.duration_levels - 1);

  SyntheticData out;
  Dataset& data = out.data;
  data.features = Matrix(spec.rows, spec.input_dim);
  data.watch_time.resize(spec.rows);
  data.duration.emplace(spec.rows);
  for (std::size_t j = 0; j < spec.input_dim; ++j) {
    data.feature_names.push_back(fmt::format("f{}", j));
  }
  out.true_mean.resize(spec.rows);
  out.level.resize(spec.rows);

  const double half_span =
      spec.duration_levels > 1
          ? 0.5 * static_cast<double>(spec.duration_levels - 1)
          : 1.0;
  for (std::size_t i = 0; i < spec.rows; ++i) {
    const std::size_t level = level_dist(rng);
    const double c = spec.duration_levels > 1
                         ? (static_cast<double>(level) - half_span) / half_span
                         : 0.0;
    out.level[i] = level;
    (*data.duration)[i] =
        kSecondsPerLevel * (static_cast<double>(level) + 1.0 + uniform(rng));

    auto x = data.features.row(i);
    for (double& v : x) v = normal(rng) + spec.confounding_x * c;

    const double score = 0.8 * x[0] + 0.5 * x[1] - 0.4 * x[2];
    const double g = spec.base_watch_time *
                     std::exp(0.5 * score + spec.confounding_t * c);
    const double sigma =
        spec.noise * g * (0.3 + 1.4 * logistic(1.5 * x[3]));
    data.watch_time[i] = std::max(0.0, g + sigma * normal(rng));
    out.true_mean[i] = clamped_normal_mean(g, sigma);
  }
  return out;
}

Dataset generate_separable(std::size_t num_classes, std::size_t rows_per_class,
                           double first_value, double spacing,
                           std::size_t extra_features) {
  if (num_classes < 2 || rows_per_class < 1 || !(spacing > 0.0) ||
      first_value < 0.0) {
    throw Error(ErrorKind::kInvalidArgument,
                "invalid separable dataset parameters");
  }
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < num_classes) ++bits;
  const std::size_t rows = num_classes * rows_per_class;

  Dataset data;
  data.features = Matrix(rows, bits + extra_features);
  data.watch_time.resize(rows);
  for (std::size_t j = 0; j < bits + extra_features; ++j) {
    data.feature_names.push_back(fmt::format("f{}", j));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t k = r % num_classes;
    for (std::size_t b = 0; b < bits; ++b) {
      data.features(r, b) = ((k >> b) & 1U) ? 1.0 : -1.0;
    }
    data.watch_time[r] = first_value + spacing * static_cast<double>(k);
  }
  return data;
}

}  // namespace tpm
