#pragma once

// Dense 2-D tensors, the five layer primitives used by the model, their
// reverse-mode gradients, a central-difference gradient checker, an
// adaptive-moment optimizer and a portable seeded initializer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace acsloc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

/// Row-major matrix of doubles. Channels are rows, snippets are columns.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("Tensor2D: data length " + std::to_string(data_.size()) +
                           " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Tensor2D&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Tensor2D zeros_like(const Tensor2D& t) { return Tensor2D(t.rows(), t.cols()); }

// ---------------------------------------------------------------------------
// Random numbers

/// SplitMix64. Fixed constants so seeds reproduce on every platform and in
/// every language that re-implements it.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer uniform in [lo, hi] (inclusive).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next() % span);
  }

  /// Box-Muller; one draw per call so the stream position is easy to reason about.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

/// Derives an independent stream seed from a base seed and a tag.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  SplitMix64 g(seed ^ (tag * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
  g.next();
  return g.next();
}

inline std::uint64_t hash_tag(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

enum class InitScheme { UniformFanIn, Zeros };

/// Deterministic initialization; uniform-fan-in draws from +/- sqrt(1/fan_in).
inline Tensor2D seeded_init(std::size_t rows, std::size_t cols, std::uint64_t seed,
                            InitScheme scheme, std::size_t fan_in) {
  Tensor2D out(rows, cols);
  if (scheme == InitScheme::Zeros) return out;
  if (fan_in == 0) throw ConfigError("seeded_init: fan_in must be positive");
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  SplitMix64 rng(seed);
  for (double& v : out.flat()) v = rng.uniform(-bound, bound);
  return out;
}

// ---------------------------------------------------------------------------
// Layers

enum class LayerKind { FullyConnected, TemporalConv };

/// Weights are [C_out x C_in] for fully-connected layers and
/// [C_out x (C_in * kernel_size)] for temporal convolutions, with the kernel
/// tap index varying fastest.
struct LayerParams {
  LayerKind kind = LayerKind::FullyConnected;
  Tensor2D weights;
  std::vector<double> bias;
  std::size_t kernel_size = 1;

  std::size_t out_channels() const { return weights.rows(); }
  std::size_t in_channels() const {
    return kind == LayerKind::FullyConnected ? weights.cols() : weights.cols() / kernel_size;
  }
  std::size_t fan_in() const { return weights.cols(); }

  bool operator==(const LayerParams&) const = default;
};

inline LayerParams make_fully_connected(std::size_t in, std::size_t out) {
  return {LayerKind::FullyConnected, Tensor2D(out, in), std::vector<double>(out, 0.0), 1};
}

inline LayerParams make_temporal_conv(std::size_t in, std::size_t out, std::size_t kernel_size) {
  if (kernel_size % 2 == 0) {
    throw ConfigError("temporal_conv: kernel_size must be odd, got " + std::to_string(kernel_size));
  }
  return {LayerKind::TemporalConv, Tensor2D(out, in * kernel_size), std::vector<double>(out, 0.0),
          kernel_size};
}

inline LayerParams zeros_like(const LayerParams& p) {
  return {p.kind, zeros_like(p.weights), std::vector<double>(p.bias.size(), 0.0), p.kernel_size};
}

inline Tensor2D fully_connected(const Tensor2D& input, const LayerParams& p) {
  if (p.kind != LayerKind::FullyConnected) throw ConfigError("fully_connected: wrong layer kind");
  if (p.weights.cols() != input.rows() || p.bias.size() != p.weights.rows()) {
    throw DimensionError("fully_connected: weights " + std::to_string(p.weights.rows()) + "x" +
                         std::to_string(p.weights.cols()) + " vs input rows " +
                         std::to_string(input.rows()));
  }
  const std::size_t T = input.cols();
  Tensor2D out(p.weights.rows(), T);
  for (std::size_t o = 0; o < out.rows(); ++o) {
    auto dst = out.row(o);
    std::fill(dst.begin(), dst.end(), p.bias[o]);
    for (std::size_t i = 0; i < input.rows(); ++i) {
      const double w = p.weights(o, i);
      auto src = input.row(i);
      for (std::size_t t = 0; t < T; ++t) dst[t] += w * src[t];
    }
  }
  return out;
}

/// Applies a fully-connected layer to a single column vector.
inline std::vector<double> fully_connected(std::span<const double> x, const LayerParams& p) {
  if (p.weights.cols() != x.size()) throw DimensionError("fully_connected: vector size mismatch");
  std::vector<double> out(p.bias);
  for (std::size_t o = 0; o < out.size(); ++o) {
    auto w = p.weights.row(o);
    for (std::size_t i = 0; i < x.size(); ++i) out[o] += w[i] * x[i];
  }
  return out;
}

/// Accumulates dL/dW, dL/db into `grad` and (optionally) dL/dinput.
inline void fully_connected_backward(const Tensor2D& input, const LayerParams& p,
                                     const Tensor2D& grad_out, LayerParams& grad,
                                     Tensor2D* grad_input = nullptr) {
  const std::size_t T = input.cols();
  for (std::size_t o = 0; o < p.weights.rows(); ++o) {
    auto g = grad_out.row(o);
    double gb = 0.0;
    for (std::size_t t = 0; t < T; ++t) gb += g[t];
    grad.bias[o] += gb;
    for (std::size_t i = 0; i < input.rows(); ++i) {
      auto x = input.row(i);
      double acc = 0.0;
      for (std::size_t t = 0; t < T; ++t) acc += g[t] * x[t];
      grad.weights(o, i) += acc;
      if (grad_input) {
        const double w = p.weights(o, i);
        auto gi = grad_input->row(i);
        for (std::size_t t = 0; t < T; ++t) gi[t] += w * g[t];
      }
    }
  }
}

/// Vector form of the backward pass; returns dL/dx.
inline std::vector<double> fully_connected_backward(std::span<const double> x, const LayerParams& p,
                                                    std::span<const double> grad_out,
                                                    LayerParams& grad) {
  std::vector<double> gx(x.size(), 0.0);
  for (std::size_t o = 0; o < grad_out.size(); ++o) {
    const double g = grad_out[o];
    grad.bias[o] += g;
    auto w = p.weights.row(o);
    auto gw = grad.weights.row(o);
    for (std::size_t i = 0; i < x.size(); ++i) {
      gw[i] += g * x[i];
      gx[i] += g * w[i];
    }
  }
  return gx;
}

/// Same-length temporal convolution with zero padding of (k-1)/2 per side.
inline Tensor2D temporal_conv(const Tensor2D& input, const LayerParams& p) {
  if (p.kind != LayerKind::TemporalConv) throw ConfigError("temporal_conv: wrong layer kind");
  const std::size_t k = p.kernel_size;
  if (k % 2 == 0) throw ConfigError("temporal_conv: kernel_size must be odd");
  if (p.weights.cols() != input.rows() * k || p.bias.size() != p.weights.rows()) {
    throw DimensionError("temporal_conv: weights " + std::to_string(p.weights.rows()) + "x" +
                         std::to_string(p.weights.cols()) + " vs input rows " +
                         std::to_string(input.rows()) + " and kernel " + std::to_string(k));
  }
  const auto T = static_cast<std::ptrdiff_t>(input.cols());
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor2D out(p.weights.rows(), input.cols());
  for (std::size_t o = 0; o < out.rows(); ++o) {
    auto dst = out.row(o);
    std::fill(dst.begin(), dst.end(), p.bias[o]);
    for (std::size_t i = 0; i < input.rows(); ++i) {
      auto src = input.row(i);
      for (std::size_t dt = 0; dt < k; ++dt) {
        const double w = p.weights(o, i * k + dt);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(dt) - pad;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(T, T - shift);
        for (std::ptrdiff_t t = lo; t < hi; ++t) dst[t] += w * src[t + shift];
      }
    }
  }
  return out;
}

inline void temporal_conv_backward(const Tensor2D& input, const LayerParams& p,
                                   const Tensor2D& grad_out, LayerParams& grad,
                                   Tensor2D* grad_input = nullptr) {
  const std::size_t k = p.kernel_size;
  const auto T = static_cast<std::ptrdiff_t>(input.cols());
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t o = 0; o < p.weights.rows(); ++o) {
    auto g = grad_out.row(o);
    double gb = 0.0;
    for (std::ptrdiff_t t = 0; t < T; ++t) gb += g[t];
    grad.bias[o] += gb;
    for (std::size_t i = 0; i < input.rows(); ++i) {
      auto x = input.row(i);
      for (std::size_t dt = 0; dt < k; ++dt) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(dt) - pad;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(T, T - shift);
        double acc = 0.0;
        for (std::ptrdiff_t t = lo; t < hi; ++t) acc += g[t] * x[t + shift];
        grad.weights(o, i * k + dt) += acc;
        if (grad_input) {
          const double w = p.weights(o, i * k + dt);
          auto gi = grad_input->row(i);
          for (std::ptrdiff_t t = lo; t < hi; ++t) gi[t + shift] += w * g[t];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Activations and classification loss

enum class Activation { Sigmoid, Relu };

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline Tensor2D activate(Tensor2D t, Activation kind) {
  for (double& v : t.flat()) v = kind == Activation::Sigmoid ? sigmoid(v) : relu(v);
  return t;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> grad;  // dloss/dlogits
};

inline CrossEntropy softmax_cross_entropy(std::span<const double> logits,
                                          std::span<const double> target) {
  if (logits.size() != target.size() || logits.empty()) {
    throw DimensionError("softmax_cross_entropy: logits/target size mismatch");
  }
  double total = 0.0;
  for (double v : target) {
    if (v < 0.0) throw ContractError("softmax_cross_entropy: negative target entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ContractError("softmax_cross_entropy: target sums to " + std::to_string(total));
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double log_norm = mx + std::log(sum);
  CrossEntropy out;
  out.grad.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double log_q = logits[k] - log_norm;
    if (target[k] > 0.0) out.loss -= target[k] * log_q;
    out.grad[k] = std::exp(log_q) - target[k];
  }
  if (out.loss < 0.0) out.loss = 0.0;  // rounding at saturation
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Per-coordinate relative error |a - n| / max(1, |a|, |n|) using central
/// differences. `value_fn` maps a parameter vector to a scalar.
template <class ValueFn>
std::vector<double> grad_check_errors(ValueFn&& value_fn, std::span<const double> point,
                                      std::span<const double> analytic, double step = 1e-4) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
  if (point.size() != analytic.size()) throw DimensionError("grad_check: gradient size mismatch");
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> errors(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = value_fn(std::span<const double>(x));
    x[i] = saved - step;
    const double down = value_fn(std::span<const double>(x));
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(analytic[i])) {
      throw NumericError("grad_check: non-finite value while probing coordinate " +
                         std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    errors[i] = std::abs(analytic[i] - numeric) / denom;
  }
  return errors;
}

template <class ValueFn>
double grad_check(ValueFn&& value_fn, std::span<const double> point,
                  std::span<const double> analytic, double step = 1e-4) {
  const auto errors = grad_check_errors(std::forward<ValueFn>(value_fn), point, analytic, step);
  double worst = 0.0;
  for (double e : errors) worst = std::max(worst, e);
  return worst;
}

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  bool operator==(const OptimizerState&) const = default;
};

/// One bias-corrected adaptive-moment update over a list of parameter blocks.
/// Moment buffers are created on the first call.
inline void optimizer_step(std::span<const std::span<double>> params,
                           std::span<const std::span<const double>> grads, OptimizerState& state) {
  if (params.size() != grads.size()) throw DimensionError("optimizer_step: block count mismatch");
  if (state.first_moment.empty()) {
    for (auto p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("optimizer_step: state has " + std::to_string(state.first_moment.size()) +
                         " blocks, parameters have " + std::to_string(params.size()));
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != state.first_moment[b].size()) {
      throw DimensionError("optimizer_step: block " + std::to_string(b) + " size mismatch");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double g = grads[b][i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      params[b][i] -= state.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
    }
  }
}

}  // namespace acsloc
