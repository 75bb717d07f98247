#pragma once

// Mini-batch driver shared by every trainer. The caller supplies the
// per-sample loss and its gradient with respect to the head probabilities.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "tpm/error.hpp"
#include "tpm/matrix.hpp"
#include "tpm/net.hpp"
#include "tpm/progressive.hpp"

namespace tpm::detail {

struct SampleLoss {
  double total = 0.0;
  double nll = 0.0;
  double std_dev = 0.0;
  double abs_error = 0.0;
};

// loss_fn(row, head_probs, head_grad) -> SampleLoss. head_grad arrives with
// num_heads entries and must be fully written.
template <typename LossFn>
TrainLog fit(MultiHeadNet& net, const Matrix& features,
             const TrainConfig& config, LossFn&& loss_fn) {
  config.validate();
  if (features.cols() != net.input_dim()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("net expects {} features, data has {}",
                            net.input_dim(), features.cols()));
  }
  TrainLog log;
  const std::size_t n = features.rows();
  if (n == 0 || config.epochs == 0) return log;

  Optimizer optimizer(config.optimizer, net.num_params());
  GradientBuffer grads = net.make_gradient_buffer();
  MultiHeadNet::Activations act;
  std::vector<double> head_grad(net.num_heads());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord record;
    record.epoch = epoch + 1;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      grads.zero();
      double batch_total = 0.0;
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t i = order[b];
        const auto x = features.row(i);
        net.forward(x, act);
        const SampleLoss v =
            loss_fn(i, std::span<const double>(act.probs),
                    std::span<double>(head_grad));
        net.backward(x, act, head_grad, grads);
        batch_total += v.total;
        record.nll += v.nll;
        record.std_term += v.std_dev;
        record.mse_term += v.abs_error;
      }
      if (!std::isfinite(batch_total)) {
        throw Error(ErrorKind::kDivergence,
                    fmt::format("diverged: non-finite loss in epoch {} at "
                                "sample offset {}",
                                epoch + 1, begin));
      }
      record.total += batch_total;
      grads.scale(1.0 / static_cast<double>(end - begin));
      optimizer.step(net, grads);
    }
    const double inv = 1.0 / static_cast<double>(n);
    record.nll *= inv;
    record.std_term *= inv;
    record.mse_term *= inv;
    record.total *= inv;
    log.push_back(record);
  }
  return log;
}

// Features with a one-hot block of `num_groups` columns appended. With a
// single group the features are returned unchanged.
Matrix append_one_hot(const Matrix& features,
                      std::span<const std::size_t> group,
                      std::size_t num_groups);

// Same for one row.
std::vector<double> append_one_hot(std::span<const double> x,
                                   std::size_t group, std::size_t num_groups);

}  // namespace tpm::detail
