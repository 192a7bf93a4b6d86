// Copyright 2026 The dqn-drive Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DRIVE_NN_HPP_
#define DRIVE_NN_HPP_

// Small dense Q-network: affine layers with RELU or LINEAR activation,
// masked mean-squared-error backpropagation, SGD / Adam updates, weight
// copies for target networks, and the MLPv1 JSON checkpoint format.
//
// Batched math keeps activations feature-major (feature x batch) so the
// inner loops run over contiguous batch entries. Every accumulation has a
// fixed order, so results are bit-reproducible for a given build.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "drive/error.hpp"
#include "drive/rng.hpp"

namespace drive {

enum class Activation { kRelu, kLinear };

inline const char* activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "linear";
}

struct DenseLayer {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> weights;  // out_dim x in_dim, row-major
  std::vector<double> biases;   // out_dim
  Activation activation = Activation::kLinear;

  DenseLayer() = default;
  DenseLayer(int in, int out, Activation act)
      : in_dim(in),
        out_dim(out),
        weights(static_cast<std::size_t>(in) * out, 0.0),
        biases(static_cast<std::size_t>(out), 0.0),
        activation(act) {}

  std::size_t param_count() const {
    return static_cast<std::size_t>(in_dim) * out_dim + out_dim;
  }
  double& w(int o, int i) {
    return weights[static_cast<std::size_t>(o) * in_dim + i];
  }
  double w(int o, int i) const {
    return weights[static_cast<std::size_t>(o) * in_dim + i];
  }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct Mlp {
  std::vector<DenseLayer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
  }

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

inline constexpr int kObservationDim = 7;
inline constexpr int kHiddenDim = 64;
inline constexpr int kQOutputs = 3;

// Throws ShapeMismatch unless adjacent layer dims chain and every buffer
// has the size its dims imply.
inline void check_architecture(const Mlp& net) {
  if (net.layers.empty()) throw Error(ErrorCode::ShapeMismatch, "network has no layers");
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const DenseLayer& l = net.layers[k];
    if (l.in_dim < 1 || l.out_dim < 1 ||
        l.weights.size() != static_cast<std::size_t>(l.in_dim) * l.out_dim ||
        l.biases.size() != static_cast<std::size_t>(l.out_dim)) {
      throw Error(ErrorCode::ShapeMismatch,
                  "layer " + std::to_string(k) + " buffers do not match dims");
    }
    if (k > 0 && net.layers[k - 1].out_dim != l.in_dim) {
      throw Error(ErrorCode::ShapeMismatch,
                  "layer " + std::to_string(k) + " input does not chain");
    }
  }
}

// He-uniform weights (bound sqrt(6 / in_dim)), zero biases. Hidden layers use
// RELU and the output layer is LINEAR.
inline Mlp init_mlp(std::uint64_t seed, std::span<const int> dims) {
  if (dims.size() < 2) throw Error(ErrorCode::ShapeMismatch, "need at least two dims");
  Rng rng(seed);
  Mlp net;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const bool last = k + 2 == dims.size();
    DenseLayer layer(dims[k], dims[k + 1],
                     last ? Activation::kLinear : Activation::kRelu);
    const double bound = std::sqrt(6.0 / dims[k]);
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    net.layers.push_back(std::move(layer));
  }
  check_architecture(net);
  return net;
}

// Default Q-network: 7 -> 64 RELU -> 64 RELU -> 3 LINEAR (4867 parameters).
inline Mlp init_mlp(std::uint64_t seed) {
  const int dims[] = {kObservationDim, kHiddenDim, kHiddenDim, kQOutputs};
  return init_mlp(seed, dims);
}

namespace detail {

// Deterministic 4-lane dot product.
inline double dot(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// z = W a + b for a feature-major activation block (in_dim x batch).
inline void affine(const DenseLayer& layer, const std::vector<double>& in,
                   int batch, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(layer.out_dim) * batch, 0.0);
  for (int o = 0; o < layer.out_dim; ++o) {
    double* z = out.data() + static_cast<std::size_t>(o) * batch;
    const double bias = layer.biases[static_cast<std::size_t>(o)];
    for (int b = 0; b < batch; ++b) z[b] = bias;
    for (int i = 0; i < layer.in_dim; ++i) {
      const double w = layer.w(o, i);
      const double* a = in.data() + static_cast<std::size_t>(i) * batch;
      for (int b = 0; b < batch; ++b) z[b] += w * a[b];
    }
  }
}

inline void activate(Activation act, std::vector<double>& z) {
  if (act == Activation::kRelu) {
    for (double& v : z) v = v > 0.0 ? v : 0.0;
  }
}

// Row-major (batch x dim) <-> feature-major (dim x batch).
inline std::vector<double> transpose(std::span<const double> m, int rows,
                                     int cols) {
  std::vector<double> t(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      t[static_cast<std::size_t>(c) * rows + r] =
          m[static_cast<std::size_t>(r) * cols + c];
    }
  }
  return t;
}

struct ForwardCache {
  // activations[k] is the input of layer k (feature-major); the final entry
  // is the network output. pre[k] holds layer k's pre-activation.
  std::vector<std::vector<double>> activations;
  std::vector<std::vector<double>> pre;
};

inline void forward_cached(const Mlp& net, std::span<const double> inputs,
                           int batch, ForwardCache& cache) {
  const int in_dim = net.input_dim();
  if (inputs.size() != static_cast<std::size_t>(batch) * in_dim) {
    throw Error(ErrorCode::ShapeMismatch, "input batch has the wrong size");
  }
  for (double v : inputs) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "input contains NaN or Inf");
  }
  cache.activations.resize(net.layers.size() + 1);
  cache.pre.resize(net.layers.size());
  cache.activations[0] = transpose(inputs, batch, in_dim);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    affine(net.layers[k], cache.activations[k], batch, cache.pre[k]);
    cache.activations[k + 1] = cache.pre[k];
    activate(net.layers[k].activation, cache.activations[k + 1]);
  }
}

}  // namespace detail

// Row-major batch in (batch x input_dim), row-major Q-values out.
inline std::vector<double> forward_batch(const Mlp& net,
                                         std::span<const double> inputs,
                                         int batch) {
  detail::ForwardCache cache;
  detail::forward_cached(net, inputs, batch, cache);
  return detail::transpose(cache.activations.back(), net.output_dim(), batch);
}

inline std::vector<double> forward(const Mlp& net, std::span<const double> input) {
  if (input.size() != static_cast<std::size_t>(net.input_dim())) {
    throw Error(ErrorCode::ShapeMismatch, "input has the wrong dimension");
  }
  return forward_batch(net, input, 1);
}

// Regression batch. Entries with mask == 0 contribute neither loss nor
// gradient; their target values are ignored.
struct TrainTarget {
  int batch = 0;
  int input_dim = kObservationDim;
  int output_dim = kQOutputs;
  std::vector<double> inputs;         // batch x input_dim
  std::vector<double> targets;        // batch x output_dim
  std::vector<std::uint8_t> mask;     // batch x output_dim

  TrainTarget() = default;
  TrainTarget(int n, int in_dim, int out_dim)
      : batch(n),
        input_dim(in_dim),
        output_dim(out_dim),
        inputs(static_cast<std::size_t>(n) * in_dim, 0.0),
        targets(static_cast<std::size_t>(n) * out_dim, 0.0),
        mask(static_cast<std::size_t>(n) * out_dim, 0) {}

  std::size_t masked_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m != 0;
    return n;
  }
};

inline void check_target_shape(const TrainTarget& t) {
  const auto n = static_cast<std::size_t>(t.batch);
  if (t.batch < 1 || t.inputs.size() != n * t.input_dim ||
      t.targets.size() != n * t.output_dim || t.mask.size() != n * t.output_dim) {
    throw Error(ErrorCode::ShapeMismatch, "train target buffers do not match batch");
  }
}

// Mean over masked entries of (pred - target)^2; pred is row-major
// batch x output_dim.
inline double mse_loss(std::span<const double> pred, const TrainTarget& target) {
  check_target_shape(target);
  if (pred.size() != target.targets.size()) {
    throw Error(ErrorCode::ShapeMismatch, "prediction shape differs from target");
  }
  const std::size_t count = target.masked_count();
  if (count == 0) throw Error(ErrorCode::EmptyMask, "no masked-in entries");
  double sum = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (target.mask[j]) {
      const double e = pred[j] - target.targets[j];
      sum += e * e;
    }
  }
  return sum / static_cast<double>(count);
}

struct LayerGradient {
  std::vector<double> weights;
  std::vector<double> biases;
};

struct Gradients {
  double loss = 0.0;
  std::vector<LayerGradient> layers;

  bool all_finite() const {
    for (const auto& g : layers) {
      for (double v : g.weights) if (!std::isfinite(v)) return false;
      for (double v : g.biases) if (!std::isfinite(v)) return false;
    }
    return std::isfinite(loss);
  }
};

// Masked-MSE loss and its gradient with respect to every parameter.
inline Gradients compute_gradients(const Mlp& net, const TrainTarget& target) {
  check_architecture(net);
  check_target_shape(target);
  if (target.input_dim != net.input_dim() || target.output_dim != net.output_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "train target dims differ from network");
  }
  const std::size_t count = target.masked_count();
  if (count == 0) throw Error(ErrorCode::EmptyMask, "no masked-in entries");

  const int batch = target.batch;
  detail::ForwardCache cache;
  detail::forward_cached(net, target.inputs, batch, cache);

  // dL/dz for the output layer, feature-major.
  const int out_dim = net.output_dim();
  const std::vector<double>& out = cache.activations.back();
  std::vector<double> delta(out.size(), 0.0);
  Gradients grads;
  double sum = 0.0;
  const double scale = 2.0 / static_cast<double>(count);
  for (int b = 0; b < batch; ++b) {
    for (int o = 0; o < out_dim; ++o) {
      const std::size_t rm = static_cast<std::size_t>(b) * out_dim + o;
      if (!target.mask[rm]) continue;
      const std::size_t fm = static_cast<std::size_t>(o) * batch + b;
      const double e = out[fm] - target.targets[rm];
      sum += e * e;
      delta[fm] = scale * e;
    }
  }
  grads.loss = sum / static_cast<double>(count);

  grads.layers.resize(net.layers.size());
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const DenseLayer& layer = net.layers[k];
    if (layer.activation == Activation::kRelu) {
      const std::vector<double>& z = cache.pre[k];
      for (std::size_t j = 0; j < delta.size(); ++j) {
        if (!(z[j] > 0.0)) delta[j] = 0.0;
      }
    }
    const std::vector<double>& a = cache.activations[k];
    LayerGradient& g = grads.layers[k];
    g.weights.assign(layer.weights.size(), 0.0);
    g.biases.assign(layer.biases.size(), 0.0);
    for (int o = 0; o < layer.out_dim; ++o) {
      const double* d = delta.data() + static_cast<std::size_t>(o) * batch;
      double bsum = 0.0;
      for (int b = 0; b < batch; ++b) bsum += d[b];
      g.biases[static_cast<std::size_t>(o)] = bsum;
      for (int i = 0; i < layer.in_dim; ++i) {
        g.weights[static_cast<std::size_t>(o) * layer.in_dim + i] =
            detail::dot(d, a.data() + static_cast<std::size_t>(i) * batch, batch);
      }
    }
    if (k == 0) break;
    std::vector<double> prev(static_cast<std::size_t>(layer.in_dim) * batch, 0.0);
    for (int o = 0; o < layer.out_dim; ++o) {
      const double* d = delta.data() + static_cast<std::size_t>(o) * batch;
      for (int i = 0; i < layer.in_dim; ++i) {
        const double w = layer.w(o, i);
        double* p = prev.data() + static_cast<std::size_t>(i) * batch;
        for (int b = 0; b < batch; ++b) p[b] += w * d[b];
      }
    }
    delta = std::move(prev);
  }
  return grads;
}

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerSettings&, const OptimizerSettings&) = default;
};

// Moment buffers are allocated only for Adam.
class OptimizerState {
 public:
  OptimizerState() = default;
  OptimizerState(const OptimizerSettings& settings, const Mlp& net)
      : settings_(settings) {
    if (settings_.kind == OptimizerKind::kAdam) {
      for (const auto& l : net.layers) {
        first_.push_back({std::vector<double>(l.weights.size(), 0.0),
                          std::vector<double>(l.biases.size(), 0.0)});
      }
      second_ = first_;
    }
  }

  const OptimizerSettings& settings() const { return settings_; }
  std::int64_t step_count() const { return step_count_; }
  bool has_moments() const { return !first_.empty(); }

  void apply(Mlp& net, const Gradients& grads) {
    if (grads.layers.size() != net.layers.size()) {
      throw Error(ErrorCode::ArchitectureMismatch, "gradient shape differs from network");
    }
    ++step_count_;
    if (settings_.kind == OptimizerKind::kSgd) {
      const double lr = settings_.learning_rate;
      for (std::size_t k = 0; k < net.layers.size(); ++k) {
        sgd(net.layers[k].weights, grads.layers[k].weights, lr);
        sgd(net.layers[k].biases, grads.layers[k].biases, lr);
      }
      return;
    }
    if (first_.size() != net.layers.size()) {
      throw Error(ErrorCode::ArchitectureMismatch, "optimizer built for another network");
    }
    const double t = static_cast<double>(step_count_);
    const double c1 = 1.0 - std::pow(settings_.beta1, t);
    const double c2 = 1.0 - std::pow(settings_.beta2, t);
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
      adam(net.layers[k].weights, grads.layers[k].weights, first_[k].weights,
           second_[k].weights, c1, c2);
      adam(net.layers[k].biases, grads.layers[k].biases, first_[k].biases,
           second_[k].biases, c1, c2);
    }
  }

 private:
  static void sgd(std::vector<double>& p, const std::vector<double>& g, double lr) {
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  }

  void adam(std::vector<double>& p, const std::vector<double>& g,
            std::vector<double>& m, std::vector<double>& v, double c1,
            double c2) const {
    const double b1 = settings_.beta1;
    const double b2 = settings_.beta2;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= settings_.learning_rate * mhat / (std::sqrt(vhat) + settings_.epsilon);
    }
  }

  OptimizerSettings settings_;
  std::vector<LayerGradient> first_;
  std::vector<LayerGradient> second_;
  std::int64_t step_count_ = 0;
};

// One optimizer step on the masked-MSE loss. Returns the pre-update loss.
inline double train_on_batch(Mlp& net, OptimizerState& opt,
                             const TrainTarget& batch) {
  Gradients grads = compute_gradients(net, batch);
  if (!grads.all_finite()) {
    throw Error(ErrorCode::NonFiniteGradient,
                "loss or gradient is not finite (loss = " +
                    std::to_string(grads.loss) + ", optimizer step " +
                    std::to_string(opt.step_count()) + ")");
  }
  opt.apply(net, grads);
  return grads.loss;
}

inline void clone_weights(const Mlp& src, Mlp& dst) {
  if (src.layers.size() != dst.layers.size()) {
    throw Error(ErrorCode::ArchitectureMismatch, "layer counts differ");
  }
  for (std::size_t k = 0; k < src.layers.size(); ++k) {
    const DenseLayer& s = src.layers[k];
    const DenseLayer& d = dst.layers[k];
    if (s.in_dim != d.in_dim || s.out_dim != d.out_dim || s.activation != d.activation) {
      throw Error(ErrorCode::ArchitectureMismatch,
                  "layer " + std::to_string(k) + " differs");
    }
  }
  dst = src;
}

inline constexpr std::string_view kModelFormat = "MLPv1";

inline std::string save_model(const Mlp& net) {
  nlohmann::json doc;
  doc["format"] = kModelFormat;
  doc["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers) {
    doc["layers"].push_back({{"in", l.in_dim},
                             {"out", l.out_dim},
                             {"act", activation_name(l.activation)},
                             {"w", l.weights},
                             {"b", l.biases}});
  }
  return doc.dump();
}

inline Mlp load_model(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format") || !doc["format"].is_string()) {
    throw Error(ErrorCode::BadFormat, "missing \"format\" field");
  }
  if (doc["format"].get<std::string>() != kModelFormat) {
    throw Error(ErrorCode::BadVersion,
                "unsupported format " + doc["format"].get<std::string>());
  }
  if (!doc.contains("layers") || !doc["layers"].is_array()) {
    throw Error(ErrorCode::BadFormat, "missing \"layers\" array");
  }
  Mlp net;
  try {
    for (const auto& jl : doc["layers"]) {
      DenseLayer l;
      l.in_dim = jl.at("in").get<int>();
      l.out_dim = jl.at("out").get<int>();
      const auto act = jl.at("act").get<std::string>();
      if (act == "relu") {
        l.activation = Activation::kRelu;
      } else if (act == "linear") {
        l.activation = Activation::kLinear;
      } else {
        throw Error(ErrorCode::BadFormat, "unknown activation " + act);
      }
      l.weights = jl.at("w").get<std::vector<double>>();
      l.biases = jl.at("b").get<std::vector<double>>();
      net.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("malformed layer: ") + e.what());
  }
  check_architecture(net);
  return net;
}

}  // namespace drive

#endif  // DRIVE_NN_HPP_
