#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrbci/rng.hpp"
#include "vrbci/tensor.hpp"

namespace vrbci {

enum class LayerKind { Dense, Conv1d, Relu, Tanh, Softmax, Flatten, MaxPool1d };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv1d: return "conv1d";
    case LayerKind::Relu: return "relu";
    case LayerKind::Tanh: return "tanh";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::MaxPool1d: return "maxpool1d";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  // dense
  std::size_t in = 0;
  std::size_t out = 0;
  // conv1d
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  // maxpool1d
  std::size_t pool = 0;

  static LayerSpec dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in = in;
    s.out = out;
    return s;
  }
  static LayerSpec conv1d(std::size_t cin, std::size_t cout, std::size_t k,
                          std::size_t stride = 1) {
    LayerSpec s;
    s.kind = LayerKind::Conv1d;
    s.in_channels = cin;
    s.out_channels = cout;
    s.kernel = k;
    s.stride = stride;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{LayerKind::Relu}; }
  static LayerSpec tanh_() { return LayerSpec{LayerKind::Tanh}; }
  static LayerSpec softmax() { return LayerSpec{LayerKind::Softmax}; }
  static LayerSpec flatten() { return LayerSpec{LayerKind::Flatten}; }
  static LayerSpec maxpool1d(std::size_t p) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool1d;
    s.pool = p;
    return s;
  }
};

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon_stability = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) {
      throw std::invalid_argument("optimizer: learning_rate must be > 0");
    }
    if (!(0.0 < beta1 && beta1 < beta2 && beta2 < 1.0)) {
      throw std::invalid_argument("optimizer: need 0 < beta1 < beta2 < 1");
    }
    if (!(epsilon_stability > 0.0)) {
      throw std::invalid_argument("optimizer: epsilon_stability must be > 0");
    }
  }
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long long step = 0;
};

// Weights/biases of one network plus its optimizer state. Tensor order is
// the layer order, weights before biases within a layer.
struct NetworkParams {
  std::vector<Tensor> tensors;
  AdamState adam;
};

enum class GradientDirection { Descend, Ascend };

// Feed-forward network over the layer kinds above. Shapes are validated at
// construction; conv layers operate on [channels, width] inputs, dense layers
// on flat vectors. Convolution is valid (no padding), pooling non-overlapping.
class Network {
 public:
  Network(std::vector<LayerSpec> specs, std::vector<std::size_t> input_shape)
      : specs_(std::move(specs)), input_shape_(std::move(input_shape)) {
    build();
  }

  const std::vector<LayerSpec>& specs() const { return specs_; }
  const std::vector<std::size_t>& input_shape() const { return input_shape_; }
  const std::vector<std::size_t>& output_shape() const {
    return layer_shapes_.back();
  }

  NetworkParams& params() { return params_; }
  const NetworkParams& params() const { return params_; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Tensor& t : params_.tensors) n += t.size();
    return n;
  }

  // Tensor names used by checkpoints and diagnostics: l<layer>.W / l<layer>.b
  std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    for (std::size_t li = 0; li < specs_.size(); ++li) {
      if (specs_[li].kind == LayerKind::Dense ||
          specs_[li].kind == LayerKind::Conv1d) {
        names.push_back("l" + std::to_string(li) + ".W");
        names.push_back("l" + std::to_string(li) + ".b");
      }
    }
    return names;
  }

  // Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases zero.
  void init_params(Rng& rng) {
    for (std::size_t li = 0, pi = 0; li < specs_.size(); ++li) {
      const LayerSpec& s = specs_[li];
      if (s.kind == LayerKind::Dense) {
        double a = std::sqrt(6.0 / double(s.in + s.out));
        for (double& w : params_.tensors[pi].values) w = rng.uniform(-a, a);
        params_.tensors[pi + 1].fill(0.0);
        pi += 2;
      } else if (s.kind == LayerKind::Conv1d) {
        double fan_in = double(s.in_channels * s.kernel);
        double fan_out = double(s.out_channels * s.kernel);
        double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& w : params_.tensors[pi].values) w = rng.uniform(-a, a);
        params_.tensors[pi + 1].fill(0.0);
        pi += 2;
      }
    }
    params_.adam.m.clear();
    params_.adam.v.clear();
    for (const Tensor& t : params_.tensors) {
      params_.adam.m.emplace_back(t.shape);
      params_.adam.v.emplace_back(t.shape);
    }
    params_.adam.step = 0;
  }

  struct Cache {
    std::vector<Tensor> inputs;  // input to each layer
    Tensor output;
  };

  Tensor forward(const Tensor& input) const {
    Cache cache;
    return forward(input, cache);
  }

  Tensor forward(const Tensor& input, Cache& cache) const {
    if (input.shape != input_shape_) {
      throw std::invalid_argument("forward: input shape " +
                                  shape_string(input.shape) + " != expected " +
                                  shape_string(input_shape_));
    }
    cache.inputs.clear();
    cache.inputs.reserve(specs_.size());
    Tensor x = input;
    for (std::size_t li = 0, pi = 0; li < specs_.size(); ++li) {
      cache.inputs.push_back(x);
      x = apply_layer(li, pi, x);
      if (specs_[li].kind == LayerKind::Dense ||
          specs_[li].kind == LayerKind::Conv1d) {
        pi += 2;
      }
    }
    if (!x.all_finite()) {
      throw std::runtime_error("forward: non-finite output");
    }
    cache.output = x;
    return x;
  }

  // Gradients w.r.t. every parameter tensor (same order as params) and the
  // network input.
  struct Gradients {
    std::vector<Tensor> tensors;
    Tensor input;
  };

  Gradients backward(const Cache& cache, const Tensor& output_gradient) const {
    if (cache.inputs.size() != specs_.size()) {
      throw std::invalid_argument("backward: cache does not match network");
    }
    if (output_gradient.shape != layer_shapes_.back()) {
      throw std::invalid_argument("backward: gradient shape " +
                                  shape_string(output_gradient.shape) +
                                  " != output " +
                                  shape_string(layer_shapes_.back()));
    }
    Gradients g;
    g.tensors.reserve(params_.tensors.size());
    for (const Tensor& t : params_.tensors) g.tensors.emplace_back(t.shape);
    g.input = backward_into(cache, output_gradient, g.tensors);
    return g;
  }

  // Adds parameter gradients into `acc` (shapes must match params).
  void backward_accumulate(const Cache& cache, const Tensor& output_gradient,
                           std::vector<Tensor>& acc) const {
    Gradients g = backward(cache, output_gradient);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      for (std::size_t j = 0; j < acc[i].size(); ++j) {
        acc[i].values[j] += g.tensors[i].values[j];
      }
    }
  }

  std::vector<Tensor> zero_like_params() const {
    std::vector<Tensor> z;
    z.reserve(params_.tensors.size());
    for (const Tensor& t : params_.tensors) z.emplace_back(t.shape);
    return z;
  }

  void adam_step(const std::vector<Tensor>& gradients,
                 const OptimizerConfig& cfg, GradientDirection direction) {
    cfg.validate();
    if (gradients.size() != params_.tensors.size()) {
      throw std::invalid_argument("adam: gradient count mismatch");
    }
    for (std::size_t i = 0; i < gradients.size(); ++i) {
      if (!gradients[i].same_shape(params_.tensors[i])) {
        throw std::invalid_argument("adam: gradient shape mismatch at tensor " +
                                    std::to_string(i));
      }
      if (!gradients[i].all_finite()) {
        throw std::runtime_error("adam: non-finite gradient in tensor " +
                                 std::to_string(i));
      }
    }
    AdamState& st = params_.adam;
    st.step += 1;
    double b1t = 1.0 - std::pow(cfg.beta1, double(st.step));
    double b2t = 1.0 - std::pow(cfg.beta2, double(st.step));
    double sign = direction == GradientDirection::Descend ? -1.0 : 1.0;
    for (std::size_t i = 0; i < gradients.size(); ++i) {
      Tensor& p = params_.tensors[i];
      Tensor& m = st.m[i];
      Tensor& v = st.v[i];
      const Tensor& g = gradients[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m.values[j] = cfg.beta1 * m.values[j] + (1.0 - cfg.beta1) * g.values[j];
        v.values[j] =
            cfg.beta2 * v.values[j] + (1.0 - cfg.beta2) * g.values[j] * g.values[j];
        double mhat = m.values[j] / b1t;
        double vhat = v.values[j] / b2t;
        p.values[j] +=
            sign * cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon_stability);
      }
    }
  }

 private:
  void build() {
    if (specs_.empty()) throw std::invalid_argument("network: no layers");
    layer_shapes_.clear();
    std::vector<std::size_t> shape = input_shape_;
    for (std::size_t li = 0; li < specs_.size(); ++li) {
      const LayerSpec& s = specs_[li];
      auto fail = [&](const std::string& msg) {
        throw std::invalid_argument("layer " + std::to_string(li) + " (" +
                                    layer_kind_name(s.kind) + "): " + msg);
      };
      switch (s.kind) {
        case LayerKind::Dense: {
          if (shape.size() != 1 || shape[0] != s.in) {
            fail("expects flat input of width " + std::to_string(s.in) +
                 ", got " + shape_string(shape));
          }
          if (s.out == 0) fail("zero output width");
          params_.tensors.emplace_back(std::vector<std::size_t>{s.out, s.in});
          params_.tensors.emplace_back(std::vector<std::size_t>{s.out});
          shape = {s.out};
          break;
        }
        case LayerKind::Conv1d: {
          if (shape.size() != 2 || shape[0] != s.in_channels) {
            fail("expects [channels=" + std::to_string(s.in_channels) +
                 ", width] input, got " + shape_string(shape));
          }
          if (s.kernel == 0 || s.stride == 0) fail("zero kernel or stride");
          if (shape[1] < s.kernel) {
            fail("input width " + std::to_string(shape[1]) +
                 " smaller than kernel " + std::to_string(s.kernel));
          }
          std::size_t w = (shape[1] - s.kernel) / s.stride + 1;
          params_.tensors.emplace_back(
              std::vector<std::size_t>{s.out_channels, s.in_channels, s.kernel});
          params_.tensors.emplace_back(std::vector<std::size_t>{s.out_channels});
          shape = {s.out_channels, w};
          break;
        }
        case LayerKind::Relu:
        case LayerKind::Tanh:
          break;
        case LayerKind::Softmax: {
          if (shape.size() != 1) fail("expects flat input");
          break;
        }
        case LayerKind::Flatten: {
          shape = {Tensor::element_count(shape)};
          break;
        }
        case LayerKind::MaxPool1d: {
          if (shape.size() != 2) fail("expects [channels, width] input");
          if (s.pool == 0) fail("zero pool width");
          if (shape[1] % s.pool != 0) {
            fail("width " + std::to_string(shape[1]) + " not divisible by pool " +
                 std::to_string(s.pool));
          }
          shape = {shape[0], shape[1] / s.pool};
          break;
        }
      }
      layer_shapes_.push_back(shape);
    }
    params_.adam.m.clear();
    params_.adam.v.clear();
    for (const Tensor& t : params_.tensors) {
      params_.adam.m.emplace_back(t.shape);
      params_.adam.v.emplace_back(t.shape);
    }
  }

  Tensor apply_layer(std::size_t li, std::size_t pi, const Tensor& x) const {
    const LayerSpec& s = specs_[li];
    switch (s.kind) {
      case LayerKind::Dense: {
        const Tensor& W = params_.tensors[pi];
        const Tensor& b = params_.tensors[pi + 1];
        Tensor y({s.out});
        for (std::size_t o = 0; o < s.out; ++o) {
          double acc = b.values[o];
          const double* wrow = &W.values[o * s.in];
          for (std::size_t i = 0; i < s.in; ++i) acc += wrow[i] * x.values[i];
          y.values[o] = acc;
        }
        return y;
      }
      case LayerKind::Conv1d: {
        const Tensor& W = params_.tensors[pi];
        const Tensor& b = params_.tensors[pi + 1];
        std::size_t win = x.shape[1];
        std::size_t wout = layer_shapes_[li][1];
        Tensor y({s.out_channels, wout});
        for (std::size_t co = 0; co < s.out_channels; ++co) {
          for (std::size_t t = 0; t < wout; ++t) {
            double acc = b.values[co];
            for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
              const double* wk = &W.values[(co * s.in_channels + ci) * s.kernel];
              const double* xs = &x.values[ci * win + t * s.stride];
              for (std::size_t k = 0; k < s.kernel; ++k) acc += wk[k] * xs[k];
            }
            y.values[co * wout + t] = acc;
          }
        }
        return y;
      }
      case LayerKind::Relu: {
        Tensor y = x;
        for (double& v : y.values) v = v > 0.0 ? v : 0.0;
        return y;
      }
      case LayerKind::Tanh: {
        Tensor y = x;
        for (double& v : y.values) v = std::tanh(v);
        return y;
      }
      case LayerKind::Softmax: {
        Tensor y = x;
        double mx = *std::max_element(y.values.begin(), y.values.end());
        double sum = 0.0;
        for (double& v : y.values) {
          v = std::exp(v - mx);
          sum += v;
        }
        for (double& v : y.values) v /= sum;
        return y;
      }
      case LayerKind::Flatten: {
        Tensor y = x;
        y.shape = {x.size()};
        return y;
      }
      case LayerKind::MaxPool1d: {
        std::size_t ch = x.shape[0];
        std::size_t win = x.shape[1];
        std::size_t wout = win / s.pool;
        Tensor y({ch, wout});
        for (std::size_t c = 0; c < ch; ++c) {
          for (std::size_t t = 0; t < wout; ++t) {
            double mx = x.values[c * win + t * s.pool];
            for (std::size_t k = 1; k < s.pool; ++k) {
              mx = std::max(mx, x.values[c * win + t * s.pool + k]);
            }
            y.values[c * wout + t] = mx;
          }
        }
        return y;
      }
    }
    throw std::logic_error("unreachable layer kind");
  }

  Tensor backward_into(const Cache& cache, const Tensor& output_gradient,
                       std::vector<Tensor>& grads) const {
    Tensor g = output_gradient;
    std::size_t pi = params_.tensors.size();
    for (std::size_t li = specs_.size(); li-- > 0;) {
      const LayerSpec& s = specs_[li];
      const Tensor& x = cache.inputs[li];
      switch (s.kind) {
        case LayerKind::Dense: {
          pi -= 2;
          const Tensor& W = params_.tensors[pi];
          Tensor& gW = grads[pi];
          Tensor& gb = grads[pi + 1];
          Tensor gx({s.in});
          for (std::size_t o = 0; o < s.out; ++o) {
            double go = g.values[o];
            gb.values[o] += go;
            const double* wrow = &W.values[o * s.in];
            double* gwrow = &gW.values[o * s.in];
            for (std::size_t i = 0; i < s.in; ++i) {
              gwrow[i] += go * x.values[i];
              gx.values[i] += go * wrow[i];
            }
          }
          g = std::move(gx);
          break;
        }
        case LayerKind::Conv1d: {
          pi -= 2;
          const Tensor& W = params_.tensors[pi];
          Tensor& gW = grads[pi];
          Tensor& gb = grads[pi + 1];
          std::size_t win = x.shape[1];
          std::size_t wout = layer_shapes_[li][1];
          Tensor gx(x.shape);
          for (std::size_t co = 0; co < s.out_channels; ++co) {
            for (std::size_t t = 0; t < wout; ++t) {
              double go = g.values[co * wout + t];
              gb.values[co] += go;
              for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
                const double* wk =
                    &W.values[(co * s.in_channels + ci) * s.kernel];
                double* gwk = &gW.values[(co * s.in_channels + ci) * s.kernel];
                const double* xs = &x.values[ci * win + t * s.stride];
                double* gxs = &gx.values[ci * win + t * s.stride];
                for (std::size_t k = 0; k < s.kernel; ++k) {
                  gwk[k] += go * xs[k];
                  gxs[k] += go * wk[k];
                }
              }
            }
          }
          g = std::move(gx);
          break;
        }
        case LayerKind::Relu: {
          Tensor gx = g;
          for (std::size_t i = 0; i < gx.size(); ++i) {
            if (x.values[i] <= 0.0) gx.values[i] = 0.0;
          }
          gx.shape = x.shape;
          g = std::move(gx);
          break;
        }
        case LayerKind::Tanh: {
          Tensor gx = g;
          for (std::size_t i = 0; i < gx.size(); ++i) {
            double th = std::tanh(x.values[i]);
            gx.values[i] *= 1.0 - th * th;
          }
          gx.shape = x.shape;
          g = std::move(gx);
          break;
        }
        case LayerKind::Softmax: {
          // y_i = softmax(x)_i; dx_i = y_i * (g_i - sum_j g_j y_j)
          Tensor y = apply_layer(li, pi, x);
          double dot = 0.0;
          for (std::size_t i = 0; i < y.size(); ++i) {
            dot += g.values[i] * y.values[i];
          }
          Tensor gx(x.shape);
          for (std::size_t i = 0; i < y.size(); ++i) {
            gx.values[i] = y.values[i] * (g.values[i] - dot);
          }
          g = std::move(gx);
          break;
        }
        case LayerKind::Flatten: {
          Tensor gx = g;
          gx.shape = x.shape;
          g = std::move(gx);
          break;
        }
        case LayerKind::MaxPool1d: {
          std::size_t ch = x.shape[0];
          std::size_t win = x.shape[1];
          std::size_t wout = layer_shapes_[li][1];
          Tensor gx(x.shape);
          for (std::size_t c = 0; c < ch; ++c) {
            for (std::size_t t = 0; t < wout; ++t) {
              // route to the first maximum, matching the forward pass
              std::size_t best = c * win + t * s.pool;
              for (std::size_t k = 1; k < s.pool; ++k) {
                std::size_t idx = c * win + t * s.pool + k;
                if (x.values[idx] > x.values[best]) best = idx;
              }
              gx.values[best] += g.values[c * wout + t];
            }
          }
          g = std::move(gx);
          break;
        }
      }
    }
    return g;
  }

  std::vector<LayerSpec> specs_;
  std::vector<std::size_t> input_shape_;
  std::vector<std::vector<std::size_t>> layer_shapes_;
  NetworkParams params_;
};

// -log(p[label]) with a floor clamp inside the log; corrupted windows can
// collapse predictions to ~0 probability.
inline constexpr double kLogClamp = 1e-12;

inline double cross_entropy(const Tensor& probabilities, std::size_t label) {
  if (label >= probabilities.size()) {
    throw std::invalid_argument("cross_entropy: label out of range");
  }
  double sum = 0.0;
  for (double p : probabilities.values) {
    if (p < 0.0) throw std::invalid_argument("cross_entropy: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("cross_entropy: probabilities sum to " +
                                std::to_string(sum));
  }
  return -std::log(std::max(probabilities.values[label], kLogClamp));
}

// Gradient of cross_entropy w.r.t. the probability vector. Composed through
// the softmax backward this yields (p - one_hot(label)) at the logits.
inline Tensor cross_entropy_gradient(const Tensor& probabilities,
                                     std::size_t label) {
  Tensor g(probabilities.shape);
  g.values[label] = -1.0 / std::max(probabilities.values[label], kLogClamp);
  return g;
}

// Shared comparison rule for analytic vs numeric gradients.
inline double gradient_rel_error(double analytic, double numeric) {
  double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

struct GradientCheckEntry {
  std::string tensor_name;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> entries;
  double tolerance = 0.0;
  bool pass = true;
};

// Compares entries of analytic parameter gradients against `numeric` and
// flags tensors above tolerance. Split out so negative controls can reuse it.
inline GradientCheckReport compare_gradients(
    const std::vector<std::string>& names, const std::vector<Tensor>& analytic,
    const std::vector<Tensor>& numeric, double tolerance) {
  GradientCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    GradientCheckEntry e;
    e.tensor_name = i < names.size() ? names[i] : ("t" + std::to_string(i));
    for (std::size_t j = 0; j < analytic[i].size(); ++j) {
      e.max_rel_error = std::max(
          e.max_rel_error,
          gradient_rel_error(analytic[i].values[j], numeric[i].values[j]));
    }
    e.pass = e.max_rel_error <= tolerance;
    report.pass = report.pass && e.pass;
    report.entries.push_back(std::move(e));
  }
  return report;
}

// Checks analytic backprop against central finite differences on a random
// instance of the given architecture. The loss is cross-entropy on a random
// label when the network ends in softmax, otherwise the sum of outputs.
// Intended for small networks (<= ~1e4 parameters).
inline GradientCheckReport gradient_check(const std::vector<LayerSpec>& specs,
                                          const std::vector<std::size_t>& input_shape,
                                          double tolerance, Rng& rng) {
  Network net(specs, input_shape);
  net.init_params(rng);
  Tensor input(input_shape);
  for (double& v : input.values) v = rng.normal();
  bool softmax_head = specs.back().kind == LayerKind::Softmax;
  std::size_t label = 0;

  Network::Cache cache;
  Tensor out = net.forward(input, cache);
  if (softmax_head) label = rng.uniform_index(out.size());

  auto loss_of = [&](const Tensor& o) {
    if (softmax_head) return cross_entropy(o, label);
    double s = 0.0;
    for (double v : o.values) s += v;
    return s;
  };

  Tensor out_grad(out.shape);
  if (softmax_head) {
    out_grad = cross_entropy_gradient(out, label);
  } else {
    out_grad.fill(1.0);
  }
  Network::Gradients analytic = net.backward(cache, out_grad);

  const double h = 1e-5;
  std::vector<Tensor> numeric = net.zero_like_params();
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    for (std::size_t j = 0; j < numeric[i].size(); ++j) {
      double saved = net.params().tensors[i].values[j];
      net.params().tensors[i].values[j] = saved + h;
      double up = loss_of(net.forward(input));
      net.params().tensors[i].values[j] = saved - h;
      double dn = loss_of(net.forward(input));
      net.params().tensors[i].values[j] = saved;
      numeric[i].values[j] = (up - dn) / (2.0 * h);
    }
  }
  return compare_gradients(net.param_names(), analytic.tensors, numeric,
                           tolerance);
}

}  // namespace vrbci
