#include "fit.hpp"

namespace tpm::detail {

Matrix append_one_hot(const Matrix& features,
                      std::span<const std::size_t> group,
                      std::size_t num_groups) {
  if (num_groups <= 1) return features;
  Matrix out(features.rows(), features.cols() + num_groups);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto src = features.row(i);
    auto dst = out.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
    dst[features.cols() + group[i]] = 1.0;
  }
  return out;
}

std::vector<double> append_one_hot(std::span<const double> x,
                                   std::size_t group, std::size_t num_groups) {
  std::vector<double> out(x.begin(), x.end());
  if (num_groups <= 1) return out;
  out.resize(x.size() + num_groups, 0.0);
  out[x.size() + group] = 1.0;
  return out;
}

}  // namespace tpm::detail
