#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advscore/common.hpp"
#include "advscore/rng.hpp"

namespace advscore {

enum class Activation { Tanh, Relu, Identity, Softmax };

inline std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
    case Activation::Softmax: return "softmax";
  }
  return "identity";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  if (name == "softmax") return Activation::Softmax;
  throw DataError("unknown activation '" + std::string(name) + "'");
}

/// Fully connected layer; `weight` is out x in, row-major.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;
  std::vector<double> bias;
  Activation activation = Activation::Identity;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Gradient storage shaped like a DenseNet's parameters.
struct GradBuffer {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;

  void zero() {
    for (auto& w : weight) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& w : weight) for (double g : w) s += g * g;
    for (const auto& b : bias) for (double g : b) s += g * g;
    return s;
  }
};

/// Activations recorded by forward(); values[0] is the input and
/// values[l + 1] the output of layer l.
struct ForwardCache {
  std::vector<std::vector<double>> values;
};

class DenseNet {
 public:
  DenseNet() = default;

  /// Zero-initialized network with the given layer widths.
  DenseNet(const std::vector<std::size_t>& dims, const std::vector<Activation>& activations) {
    if (dims.size() < 2 || activations.size() != dims.size() - 1) {
      throw UsageError("DenseNet needs n+1 widths for n activations");
    }
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      if (dims[l] == 0 || dims[l + 1] == 0) throw UsageError("DenseNet widths must be positive");
      if (activations[l] == Activation::Softmax && l + 2 != dims.size()) {
        throw UsageError("softmax is only allowed as the final activation");
      }
      DenseLayer layer;
      layer.in = dims[l];
      layer.out = dims[l + 1];
      layer.weight.assign(layer.in * layer.out, 0.0);
      layer.bias.assign(layer.out, 0.0);
      layer.activation = activations[l];
      layers_.push_back(std::move(layer));
    }
  }

  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static DenseNet random(const std::vector<std::size_t>& dims, const std::vector<Activation>& activations,
                         Rng& rng) {
    DenseNet net(dims, activations);
    for (auto& layer : net.layers_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& w : layer.weight) w = u(rng);
      for (double& b : layer.bias) b = u(rng);
    }
    return net;
  }

  std::size_t input_size() const { return layers_.front().in; }
  std::size_t output_size() const { return layers_.back().out; }
  bool empty() const { return layers_.empty(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  GradBuffer make_grad_buffer() const {
    GradBuffer g;
    for (const auto& l : layers_) {
      g.weight.emplace_back(l.weight.size(), 0.0);
      g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
  }

  void validate() const {
    if (layers_.empty()) throw DataError("network has no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.weight.size() != layer.in * layer.out || layer.bias.size() != layer.out) {
        throw DataError("layer " + std::to_string(l) + " parameter shape mismatch");
      }
      if (l > 0 && layers_[l - 1].out != layer.in) throw DataError("layer widths do not chain");
      if (layer.activation == Activation::Softmax && l + 1 != layers_.size()) {
        throw DataError("softmax is only allowed as the final activation");
      }
      for (double w : layer.weight) if (!std::isfinite(w)) throw DataError("non-finite weight");
      for (double b : layer.bias) if (!std::isfinite(b)) throw DataError("non-finite bias");
    }
  }

  friend bool operator==(const DenseNet&, const DenseNet&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

namespace detail {

inline void apply_activation(Activation a, std::span<double> z) {
  switch (a) {
    case Activation::Tanh:
      for (double& v : z) v = std::tanh(v);
      break;
    case Activation::Relu:
      for (double& v : z) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::Identity:
      break;
    case Activation::Softmax: {
      double mx = z[0];
      for (double v : z) mx = std::max(mx, v);
      double sum = 0.0;
      for (double& v : z) {
        v = std::exp(v - mx);
        sum += v;
      }
      for (double& v : z) v /= sum;
      break;
    }
  }
}

// Converts d(loss)/d(output) into d(loss)/d(pre-activation), in place.
inline void activation_backward(Activation a, std::span<const double> y, std::span<double> g) {
  switch (a) {
    case Activation::Tanh:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = y[i] > 0.0 ? g[i] : 0.0;
      break;
    case Activation::Identity:
      break;
    case Activation::Softmax: {
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += y[i] * g[i];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = y[i] * (g[i] - dot);
      break;
    }
  }
}

}  // namespace detail

inline std::vector<double> forward(const DenseNet& net, std::span<const double> input, ForwardCache* cache = nullptr) {
  if (net.empty() || input.size() != net.input_size()) {
    throw UsageError("forward: expected input of width " + std::to_string(net.empty() ? 0 : net.input_size()) +
                     ", got " + std::to_string(input.size()));
  }
  std::vector<double> x(input.begin(), input.end());
  if (cache) {
    cache->values.clear();
    cache->values.push_back(x);
  }
  for (const auto& layer : net.layers()) {
    std::vector<double> z(layer.bias);
    const double* w = layer.weight.data();
    for (std::size_t o = 0; o < layer.out; ++o, w += layer.in) {
      double acc = 0.0;
      for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * x[i];
      z[o] += acc;
    }
    detail::apply_activation(layer.activation, z);
    x = std::move(z);
    if (cache) cache->values.push_back(x);
  }
  return x;
}

/// Reverse pass: adds d(loss)/d(params) into `grads` and returns
/// d(loss)/d(input).
inline std::vector<double> backward(const DenseNet& net, const ForwardCache& cache, std::span<const double> output_grad,
                                    GradBuffer& grads) {
  const auto& layers = net.layers();
  if (cache.values.size() != layers.size() + 1) throw UsageError("backward: cache does not match network depth");
  if (output_grad.size() != net.output_size()) throw UsageError("backward: output gradient width mismatch");
  if (grads.weight.size() != layers.size()) throw UsageError("backward: gradient buffer does not match network");

  std::vector<double> g(output_grad.begin(), output_grad.end());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const auto& x = cache.values[l];
    const auto& y = cache.values[l + 1];
    if (x.size() != layer.in || y.size() != layer.out) throw UsageError("backward: cache shape mismatch");
    detail::activation_backward(layer.activation, y, g);

    auto& gw = grads.weight[l];
    auto& gb = grads.bias[l];
    std::vector<double> gx(layer.in, 0.0);
    const double* w = layer.weight.data();
    double* dw = gw.data();
    for (std::size_t o = 0; o < layer.out; ++o, w += layer.in, dw += layer.in) {
      const double go = g[o];
      gb[o] += go;
      if (go == 0.0) continue;
      for (std::size_t i = 0; i < layer.in; ++i) {
        dw[i] += go * x[i];
        gx[i] += go * w[i];
      }
    }
    g = std::move(gx);
  }
  return g;
}

/// Convenience overload returning a fresh gradient buffer.
inline GradBuffer backward(const DenseNet& net, const ForwardCache& cache, std::span<const double> output_grad) {
  GradBuffer g = net.make_grad_buffer();
  backward(net, cache, output_grad, g);
  return g;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  GradBuffer m;
  GradBuffer v;
  long step = 0;

  static AdamState for_net(const DenseNet& net) { return {net.make_grad_buffer(), net.make_grad_buffer(), 0}; }
};

inline void adam_step(DenseNet& net, const GradBuffer& grads, double lr, AdamState& state, const AdamConfig& cfg = {}) {
  auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || state.m.weight.size() != layers.size()) {
    throw UsageError("adam_step: shapes do not match the network");
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, grads.weight[l], state.m.weight[l], state.v.weight[l]);
    update(layers[l].bias, grads.bias[l], state.m.bias[l], state.v.bias[l]);
  }
}

inline double gaussian_logprob(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) throw UsageError("gaussian sigma must be positive");
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double gaussian_sample(double mu, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw UsageError("gaussian sigma must be positive");
  std::normal_distribution<double> n(0.0, 1.0);
  return mu + sigma * n(rng);
}

}  // namespace advscore
