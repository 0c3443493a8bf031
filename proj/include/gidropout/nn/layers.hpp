#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "gidropout/nn/tensor.hpp"

namespace gidropout::nn {

// ---------------------------------------------------------------------------
// Embedding lookup

inline Tensor embed_lookup(std::span<const std::size_t> ids, const Parameter& table) {
  const std::size_t vocab = table.value.rows(), dim = table.value.cols();
  Tensor out = Tensor::matrix(ids.size(), dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab)
      throw ConfigError("embedding index " + std::to_string(ids[i]) + " out of range (vocab " +
                        std::to_string(vocab) + ")");
    auto src = table.value.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out.require_finite("embed_lookup");
}

// Scatter-adds row gradients; repeated ids accumulate.
inline void embed_lookup_backward(std::span<const std::size_t> ids, const Tensor& grad_out,
                                  Parameter& table) {
  for (std::size_t i = 0; i < ids.size(); ++i) axpy(1.0, grad_out.row(i), table.grad.row(ids[i]));
}

// ---------------------------------------------------------------------------
// Dense layer y = W x + b, W is (out x in).

enum class Activation { none, relu };

struct Dense {
  Parameter weight;
  Parameter bias;
  Activation activation = Activation::none;

  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out, Activation act)
      : weight(name + ".weight", Tensor::matrix(out, in)),
        bias(name + ".bias", Tensor::vector(out)),
        activation(act) {}

  std::size_t in_dim() const { return weight.value.cols(); }
  std::size_t out_dim() const { return weight.value.rows(); }

  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
    weight.init_uniform(rng, bound);
    bias.init_uniform(rng, bound);
  }

  // Returns the post-activation output.
  std::vector<double> forward(std::span<const double> x) const {
    std::vector<double> y(out_dim());
    for (std::size_t o = 0; o < y.size(); ++o) {
      y[o] = bias.value[o] + dot(weight.value.row(o), x);
      if (activation == Activation::relu && y[o] < 0.0) y[o] = 0.0;
    }
    return y;
  }

  // `y` is the forward output (needed for the ReLU gate). Returns dL/dx.
  std::vector<double> backward(std::span<const double> x, std::span<const double> y,
                               std::span<const double> grad_y) {
    std::vector<double> grad_x(in_dim(), 0.0);
    for (std::size_t o = 0; o < out_dim(); ++o) {
      double g = grad_y[o];
      if (activation == Activation::relu && !(y[o] > 0.0)) g = 0.0;
      if (g == 0.0) continue;
      bias.grad[o] += g;
      axpy(g, x, weight.grad.row(o));
      axpy(g, weight.value.row(o), grad_x);
    }
    return grad_x;
  }
};

// ---------------------------------------------------------------------------
// Classic inverted dropout for hidden units: kept units are scaled by 1/(1-p)
// during training so evaluation needs no rescaling.

inline std::vector<double> sample_unit_dropout(std::size_t n, double p, Rng& rng) {
  std::vector<double> scale(n, 1.0);
  if (p <= 0.0) return scale;
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& s : scale) s = uniform01(rng) < p ? 0.0 : keep_scale;
  return scale;
}

inline std::vector<double> apply_scale(std::span<const double> x, std::span<const double> scale) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * scale[i];
  return y;
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy

inline std::vector<double> softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& x : p) x /= sum;
  return p;
}

struct CrossEntropy {
  double loss = 0.0;
  std::vector<double> probs;
  std::vector<double> grad;  // dL/dlogits
};

// Log-sum-exp stabilized softmax cross-entropy.
inline CrossEntropy softmax_ce(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw ConfigError("softmax_ce: label out of range");
  for (double z : logits)
    if (!std::isfinite(z)) throw DivergenceError("non-finite logits in softmax_ce");
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);

  CrossEntropy ce;
  ce.loss = lse - logits[label];
  ce.probs = softmax(logits);
  ce.grad = ce.probs;
  ce.grad[label] -= 1.0;
  return ce;
}

}  // namespace gidropout::nn
