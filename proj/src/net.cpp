#include "tpm/net.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "tpm/error.hpp"

namespace tpm {

std::string_view to_string(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "tanh";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw Error(ErrorKind::kConfig,
              fmt::format("unknown activation '{}' (expected relu|tanh)",
                          name));
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind optimizer_kind_from_string(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw Error(ErrorKind::kConfig,
              fmt::format("unknown optimizer '{}' (expected adam|sgd)", name));
}

void NetConfig::validate() const {
  if (input_dim < 1) {
    throw Error(ErrorKind::kInvalidArgument, "input_dim must be >= 1");
  }
  if (num_heads < 1) {
    throw Error(ErrorKind::kInvalidArgument, "num_heads must be >= 1");
  }
  if (hidden_dims.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "hidden_dims must be non-empty");
  }
  for (std::size_t width : hidden_dims) {
    if (width < 1) {
      throw Error(ErrorKind::kInvalidArgument, "hidden widths must be >= 1");
    }
  }
}

void GradientBuffer::zero() { std::fill(values_.begin(), values_.end(), 0.0); }

void GradientBuffer::scale(double factor) {
  for (double& v : values_) v *= factor;
}

void MultiHeadNet::layout() {
  config_.validate();
  layers_.clear();
  std::size_t in = config_.input_dim;
  std::size_t offset = 0;
  for (std::size_t out : config_.hidden_dims) {
    layers_.push_back({in, out, offset});
    offset += layers_.back().size();
    in = out;
  }
  layers_.push_back({in, config_.num_heads, offset});
  offset += layers_.back().size();
  params_.assign(offset, 0.0);
}

MultiHeadNet::MultiHeadNet(const NetConfig& config) : config_(config) {
  layout();
  std::mt19937_64 rng(config_.seed);
  for (const LayerShape& layer : layers_) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = 0; i < layer.weight_count(); ++i) {
      params_[layer.offset + i] = dist(rng);
    }
  }
}

MultiHeadNet::MultiHeadNet(const NetConfig& config, std::vector<double> params)
    : config_(config) {
  layout();
  if (params.size() != params_.size()) {
    throw Error(ErrorKind::kModelFormat,
                fmt::format("expected {} network parameters, got {}",
                            params_.size(), params.size()));
  }
  for (double p : params) {
    if (!std::isfinite(p)) {
      throw Error(ErrorKind::kModelFormat, "non-finite network parameter");
    }
  }
  params_ = std::move(params);
}

namespace {

void dense(const LayerShape& layer, std::span<const double> params,
           std::span<const double> in, std::vector<double>& out) {
  out.resize(layer.out);
  const double* w = params.data() + layer.offset;
  const double* b = params.data() + layer.bias_offset();
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double* row = w + o * layer.in;
    double z = b[o];
    for (std::size_t i = 0; i < layer.in; ++i) z += row[i] * in[i];
    out[o] = z;
  }
}

}  // namespace

void MultiHeadNet::forward(std::span<const double> x, Activations& act) const {
  if (x.size() != config_.input_dim) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("expected {} input features, got {}",
                            config_.input_dim, x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kData, "non-finite input feature");
    }
  }
  const std::size_t trunk = layers_.size() - 1;
  act.hidden.resize(trunk);
  std::span<const double> in = x;
  for (std::size_t l = 0; l < trunk; ++l) {
    auto& h = act.hidden[l];
    dense(layers_[l], params_, in, h);
    if (config_.activation == Activation::kRelu) {
      for (double& v : h) v = v > 0.0 ? v : 0.0;
    } else {
      for (double& v : h) v = std::tanh(v);
    }
    in = h;
  }
  dense(layers_.back(), params_, in, act.logits);
  act.probs.resize(act.logits.size());
  for (std::size_t h = 0; h < act.logits.size(); ++h) {
    const double p = 1.0 / (1.0 + std::exp(-act.logits[h]));
    act.probs[h] = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
  }
}

std::vector<double> MultiHeadNet::forward(std::span<const double> x) const {
  Activations act;
  forward(x, act);
  return std::move(act.probs);
}

void MultiHeadNet::backward(std::span<const double> x, const Activations& act,
                            std::span<const double> upstream,
                            GradientBuffer& grads) const {
  if (upstream.size() != config_.num_heads ||
      grads.size() != params_.size()) {
    throw Error(ErrorKind::kInvalidArgument, "backward shape mismatch");
  }
  auto g = grads.values();

  // d loss / d logit. Clamped heads are flat in the logit.
  std::vector<double> delta(config_.num_heads);
  for (std::size_t h = 0; h < delta.size(); ++h) {
    const double p = 1.0 / (1.0 + std::exp(-act.logits[h]));
    const bool clamped = p <= kProbEpsilon || p >= 1.0 - kProbEpsilon;
    delta[h] = clamped ? 0.0 : upstream[h] * p * (1.0 - p);
  }

  std::vector<double> next;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const LayerShape& layer = layers_[l];
    std::span<const double> in =
        l == 0 ? x : std::span<const double>(act.hidden[l - 1]);
    const double* w = params_.data() + layer.offset;
    double* gw = g.data() + layer.offset;
    double* gb = g.data() + layer.bias_offset();

    if (l > 0) next.assign(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb[o] += d;
      double* grow = gw + o * layer.in;
      const double* wrow = w + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) grow[i] += d * in[i];
      if (l > 0) {
        for (std::size_t i = 0; i < layer.in; ++i) next[i] += d * wrow[i];
      }
    }
    if (l == 0) break;

    // Through the activation of layer l-1.
    const auto& out = act.hidden[l - 1];
    if (config_.activation == Activation::kRelu) {
      for (std::size_t i = 0; i < next.size(); ++i) {
        if (out[i] <= 0.0) next[i] = 0.0;
      }
    } else {
      for (std::size_t i = 0; i < next.size(); ++i) {
        next[i] *= 1.0 - out[i] * out[i];
      }
    }
    delta.swap(next);
  }
}

Optimizer::Optimizer(const OptimizerConfig& config, std::size_t num_params)
    : config_(config) {
  if (!(config_.learning_rate > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "learning rate must be > 0");
  }
  if (config_.kind == OptimizerKind::kAdam) {
    first_moment_.assign(num_params, 0.0);
    second_moment_.assign(num_params, 0.0);
  }
}

void Optimizer::step(MultiHeadNet& net, const GradientBuffer& grads) {
  auto g = grads.values();
  auto p = net.params();
  if (g.size() != p.size()) {
    throw Error(ErrorKind::kInvalidArgument, "gradient shape mismatch");
  }
  for (double v : g) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kDivergence, "diverged");
  }
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    return;
  }
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    first_moment_[i] = b1 * first_moment_[i] + (1.0 - b1) * g[i];
    second_moment_[i] = b2 * second_moment_[i] + (1.0 - b2) * g[i] * g[i];
    const double m_hat = first_moment_[i] / c1;
    const double v_hat = second_moment_[i] / c2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

}  // namespace tpm
