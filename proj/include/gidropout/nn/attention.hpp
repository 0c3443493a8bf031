#pragma once

// Multi-hop self-attention over recurrent states:
//   A = row_softmax(W_s2 tanh(W_s1 H^T)),  M = A H
// plus the hop-diversity penalty ||A A^T - I||_F^2.

#include <cmath>

#include "gidropout/nn/layers.hpp"
#include "gidropout/nn/tensor.hpp"

namespace gidropout::nn {

struct AttentionOutput {
  Tensor annotation;  // A: r x n, rows are probability vectors
  Tensor embedding;   // M: r x 2u
};

struct AttentionCache {
  Tensor states;  // H: n x 2u
  Tensor hidden;  // tanh(W_s1 H^T): d_a x n
};

class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(std::size_t state_dim, std::size_t attn_dim, std::size_t hops)
      : w_s1("attn.w_s1", Tensor::matrix(attn_dim, state_dim)),
        w_s2("attn.w_s2", Tensor::matrix(hops, attn_dim)) {}

  Parameter w_s1;  // d_a x 2u
  Parameter w_s2;  // r x d_a

  std::size_t hops() const { return w_s2.value.rows(); }

  void init(Rng& rng) {
    w_s1.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(w_s1.value.cols())));
    w_s2.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(w_s2.value.cols())));
  }

  AttentionOutput forward(const Tensor& h, AttentionCache& cache) const {
    const std::size_t n = h.rows(), dh = h.cols();
    const std::size_t da = w_s1.value.rows(), r = hops();
    cache.states = h;
    cache.hidden = Tensor::matrix(da, n);
    for (std::size_t a = 0; a < da; ++a)
      for (std::size_t t = 0; t < n; ++t)
        cache.hidden(a, t) = std::tanh(dot(w_s1.value.row(a), h.row(t)));

    AttentionOutput out{Tensor::matrix(r, n), Tensor::matrix(r, dh)};
    std::vector<double> logits(n);
    for (std::size_t k = 0; k < r; ++k) {
      for (std::size_t t = 0; t < n; ++t) {
        double s = 0.0;
        for (std::size_t a = 0; a < da; ++a) s += w_s2.value(k, a) * cache.hidden(a, t);
        logits[t] = s;
      }
      const auto probs = softmax(logits);
      for (std::size_t t = 0; t < n; ++t) {
        out.annotation(k, t) = probs[t];
        axpy(probs[t], h.row(t), out.embedding.row(k));
      }
    }
    return out;
  }

  // Takes dL/dM and dL/dA (the latter from the penalty; may be all zero).
  // Returns dL/dH.
  Tensor backward(const AttentionCache& cache, const Tensor& annotation, const Tensor& grad_m,
                  const Tensor& grad_a) {
    const Tensor& h = cache.states;
    const std::size_t n = h.rows(), dh = h.cols();
    const std::size_t da = w_s1.value.rows(), r = hops();
    Tensor grad_h = Tensor::matrix(n, dh);

    // dL/dlogits, r x n
    Tensor grad_logits = Tensor::matrix(r, n);
    for (std::size_t k = 0; k < r; ++k) {
      std::vector<double> ga(n);
      double weighted = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        ga[t] = dot(grad_m.row(k), h.row(t)) + grad_a(k, t);
        weighted += ga[t] * annotation(k, t);
        axpy(annotation(k, t), grad_m.row(k), grad_h.row(t));
      }
      for (std::size_t t = 0; t < n; ++t) grad_logits(k, t) = annotation(k, t) * (ga[t] - weighted);
    }

    // logits = W_s2 S
    Tensor grad_pre = Tensor::matrix(da, n);
    for (std::size_t k = 0; k < r; ++k)
      for (std::size_t a = 0; a < da; ++a)
        for (std::size_t t = 0; t < n; ++t) {
          w_s2.grad(k, a) += grad_logits(k, t) * cache.hidden(a, t);
          grad_pre(a, t) += w_s2.value(k, a) * grad_logits(k, t);
        }
    // S = tanh(W_s1 H^T)
    for (std::size_t a = 0; a < da; ++a)
      for (std::size_t t = 0; t < n; ++t) {
        const double s = cache.hidden(a, t);
        const double g = grad_pre(a, t) * (1.0 - s * s);
        if (g == 0.0) continue;
        axpy(g, h.row(t), w_s1.grad.row(a));
        axpy(g, w_s1.value.row(a), grad_h.row(t));
      }
    return grad_h;
  }
};

struct Penalty {
  double value = 0.0;
  Tensor grad;  // dP/dA, r x n
};

// ||A A^T - I||_F^2 with gradient 4 (A A^T - I) A.
inline Penalty attention_penalty(const Tensor& a) {
  const std::size_t r = a.rows(), n = a.cols();
  Tensor diff = Tensor::matrix(r, r);
  Penalty p;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      diff(i, j) = dot(a.row(i), a.row(j)) - (i == j ? 1.0 : 0.0);
      p.value += diff(i, j) * diff(i, j);
    }
  p.grad = Tensor::matrix(r, n);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) axpy(4.0 * diff(i, j), a.row(j), p.grad.row(i));
  return p;
}

}  // namespace gidropout::nn
