#include "tpm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "tpm/error.hpp"

namespace tpm {
namespace {

void check_lengths(std::span<const double> predictions,
                   std::span<const double> truths, std::size_t min_size) {
  if (predictions.size() != truths.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("{} predictions for {} truths",
                            predictions.size(), truths.size()));
  }
  if (truths.size() < min_size) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("need at least {} samples", min_size));
  }
}

void check_orderable(std::span<const double> truths) {
  const auto [lo, hi] = std::minmax_element(truths.begin(), truths.end());
  if (*lo == *hi) throw Error(ErrorKind::kData, "no orderable pairs");
}

// Twice the credit of one pair: 2 concordant, 1 tie, 0 discordant.
int pair_credit(double pi, double pj, double ti, double tj) {
  if (pi == pj) return 1;
  return ((pi < pj) == (ti < tj)) ? 2 : 0;
}

}  // namespace

double mae(std::span<const double> predictions,
           std::span<const double> truths) {
  check_lengths(predictions, truths, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    sum += std::abs(predictions[i] - truths[i]);
  }
  return sum / static_cast<double>(truths.size());
}

double xauc_exhaustive(std::span<const double> predictions,
                       std::span<const double> truths) {
  check_lengths(predictions, truths, 2);
  check_orderable(truths);
  std::uint64_t credit = 0;
  std::uint64_t pairs = 0;
  const std::size_t n = truths.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (truths[i] == truths[j]) continue;
      credit += static_cast<std::uint64_t>(
          pair_credit(predictions[i], predictions[j], truths[i], truths[j]));
      ++pairs;
    }
  }
  return static_cast<double>(credit) / (2.0 * static_cast<double>(pairs));
}

double xauc_sampled(std::span<const double> predictions,
                    std::span<const double> truths, std::size_t num_pairs,
                    std::uint64_t seed) {
  check_lengths(predictions, truths, 2);
  check_orderable(truths);
  std::mt19937_64 rng(seed);
  const std::size_t n = truths.size();
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::uniform_int_distribution<std::size_t> second(0, n - 2);
  std::uint64_t credit = 0;
  std::uint64_t pairs = 0;
  for (std::size_t s = 0; s < num_pairs; ++s) {
    const std::size_t i = first(rng);
    std::size_t j = second(rng);
    if (j >= i) ++j;
    if (truths[i] == truths[j]) continue;
    credit += static_cast<std::uint64_t>(
        pair_credit(predictions[i], predictions[j], truths[i], truths[j]));
    ++pairs;
  }
  if (pairs == 0) throw Error(ErrorKind::kData, "no orderable pairs sampled");
  return static_cast<double>(credit) / (2.0 * static_cast<double>(pairs));
}

double xauc(std::span<const double> predictions,
            std::span<const double> truths, const XaucOptions& options) {
  if (truths.size() <= options.max_exhaustive) {
    return xauc_exhaustive(predictions, truths);
  }
  return xauc_sampled(predictions, truths, options.sampled_pairs,
                      options.seed);
}

}  // namespace tpm
