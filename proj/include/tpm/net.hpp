#pragma once

// Shared-trunk MLP with one sigmoid output per classification task. All
// parameters live in one flat buffer so optimizers and serialization can
// treat them uniformly.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace tpm {

// Head probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon].
inline constexpr double kProbEpsilon = 1e-7;

enum class Activation { kRelu, kTanh };

std::string_view to_string(Activation activation);
Activation activation_from_string(std::string_view name);

struct NetConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims = {64, 32};
  std::size_t num_heads = 1;
  std::uint64_t seed = 0;
  Activation activation = Activation::kRelu;

  void validate() const;
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// Dense layer geometry inside the flat parameter buffer. Weights are stored
// row-major as [out][in], followed by `out` biases.
struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;

  std::size_t weight_count() const { return in * out; }
  std::size_t bias_offset() const { return offset + weight_count(); }
  std::size_t size() const { return weight_count() + out; }
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

class GradientBuffer {
 public:
  GradientBuffer() = default;
  explicit GradientBuffer(std::size_t size) : values_(size, 0.0) {}

  void zero();
  void scale(double factor);
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_;
};

class MultiHeadNet {
 public:
  // Intermediate values of one forward pass, reused by backward().
  struct Activations {
    std::vector<std::vector<double>> hidden;  // post-activation, per layer
    std::vector<double> logits;
    std::vector<double> probs;  // clamped
  };

  MultiHeadNet() = default;
  // Seeded Glorot-uniform weights, zero biases.
  explicit MultiHeadNet(const NetConfig& config);
  // Explicit parameters, e.g. from a model file.
  MultiHeadNet(const NetConfig& config, std::vector<double> params);

  const NetConfig& config() const { return config_; }
  std::size_t num_heads() const { return config_.num_heads; }
  std::size_t input_dim() const { return config_.input_dim; }
  std::size_t num_params() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  // Trunk layers in order, then the head layer.
  std::span<const LayerShape> layers() const { return layers_; }

  std::vector<double> forward(std::span<const double> x) const;
  void forward(std::span<const double> x, Activations& act) const;

  // Accumulates d(sum_h upstream[h] * prob_h)/d(params) into `grads`.
  // Heads whose probability was clamped contribute nothing.
  void backward(std::span<const double> x, const Activations& act,
                std::span<const double> upstream,
                GradientBuffer& grads) const;

  GradientBuffer make_gradient_buffer() const {
    return GradientBuffer(params_.size());
  }

  friend bool operator==(const MultiHeadNet&, const MultiHeadNet&) = default;

 private:
  void layout();

  NetConfig config_;
  std::vector<LayerShape> layers_;
  std::vector<double> params_;
};

enum class OptimizerKind { kAdam, kSgd };

std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerConfig&,
                         const OptimizerConfig&) = default;
};

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, std::size_t num_params);

  // Throws Error(kDivergence) if any gradient is non-finite; the network is
  // left untouched in that case.
  void step(MultiHeadNet& net, const GradientBuffer& grads);

  std::uint64_t steps() const { return steps_; }

 private:
  OptimizerConfig config_;
  std::vector<double> first_moment_;
  std::vector<double> second_moment_;
  std::uint64_t steps_ = 0;
};

}  // namespace tpm
