#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace tpm {

double mae(std::span<const double> predictions, std::span<const double> truths);

struct XaucOptions {
  // Up to this many samples every pair is scored; above it, pairs are drawn.
  std::size_t max_exhaustive = 10'000;
  std::size_t sampled_pairs = 1'000'000;
  std::uint64_t seed = 0;
};

// Fraction of pairs with distinct truths whose predictions are ordered the
// same way. Tied predictions score 0.5. Throws Error(kData) with "no
// orderable pairs" when every truth is equal.
double xauc(std::span<const double> predictions,
            std::span<const double> truths, const XaucOptions& options = {});

// Every pair, regardless of size.
double xauc_exhaustive(std::span<const double> predictions,
                       std::span<const double> truths);

// `num_pairs` uniformly drawn index pairs (i != j); pairs with equal truths
// are drawn but not scored.
double xauc_sampled(std::span<const double> predictions,
                    std::span<const double> truths, std::size_t num_pairs,
                    std::uint64_t seed);

}  // namespace tpm
