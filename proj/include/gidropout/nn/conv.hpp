#pragma once

// 1-d convolution over time with several filter widths, ReLU and
// max-over-time pooling, fused into one op.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gidropout/nn/tensor.hpp"

namespace gidropout::nn {

struct ConvCache {
  Tensor padded;                      // L x d, zero rows appended up to the widest filter
  std::vector<std::size_t> argmax;    // per output feature, first position of the max
  std::vector<double> pooled;         // per output feature, max pre-activation
  std::vector<bool> tied;             // another position reached the same max

  // Hash of the discrete routing decisions. Finite-difference checks compare
  // it across perturbations to detect non-differentiable points.
  std::uint64_t signature() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t f = 0; f < argmax.size(); ++f) {
      h = (h ^ (argmax[f] * 2 + (pooled[f] > 0.0))) * 0x100000001B3ULL;
    }
    return h;
  }
};

class ConvBank {
 public:
  ConvBank() = default;
  ConvBank(std::vector<std::size_t> widths, std::size_t filters, std::size_t embed_dim)
      : widths_(std::move(widths)), filters_(filters), dim_(embed_dim) {
    for (auto w : widths_) {
      const auto tag = "conv" + std::to_string(w);
      weights_.emplace_back(tag + ".weight", Tensor::matrix(filters_, w * dim_));
      biases_.emplace_back(tag + ".bias", Tensor::vector(filters_));
    }
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t filters() const { return filters_; }
  std::size_t output_dim() const { return widths_.size() * filters_; }
  std::size_t max_width() const { return *std::max_element(widths_.begin(), widths_.end()); }

  Parameter& weight(std::size_t i) { return weights_[i]; }
  Parameter& bias(std::size_t i) { return biases_[i]; }
  const Parameter& weight(std::size_t i) const { return weights_[i]; }
  const Parameter& bias(std::size_t i) const { return biases_[i]; }

  void init(Rng& rng) {
    for (std::size_t i = 0; i < widths_.size(); ++i) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[i] * dim_));
      weights_[i].init_uniform(rng, bound);
      biases_[i].init_uniform(rng, bound);
    }
  }

  // X is n x d. Returns |widths| * filters features, width-major.
  std::vector<double> forward(const Tensor& x, ConvCache& cache) const {
    const std::size_t len = std::max(x.rows(), max_width());
    cache.padded = Tensor::matrix(len, dim_);
    std::copy(x.values().begin(), x.values().end(), cache.padded.values().begin());
    cache.argmax.assign(output_dim(), 0);
    cache.pooled.assign(output_dim(), 0.0);
    cache.tied.assign(output_dim(), false);

    std::vector<double> out(output_dim(), 0.0);
    const double* xp = cache.padded.data();
    for (std::size_t wi = 0; wi < widths_.size(); ++wi) {
      const std::size_t w = widths_[wi], span_len = w * dim_, positions = len - w + 1;
      for (std::size_t f = 0; f < filters_; ++f) {
        const auto filter = weights_[wi].value.row(f);
        const double b = biases_[wi].value[f];
        double best = 0.0;
        std::size_t best_t = 0;
        bool tie = false;
        for (std::size_t t = 0; t < positions; ++t) {
          const double z = b + dot(filter, {xp + t * dim_, span_len});
          if (t == 0 || z > best) {
            best = z;
            best_t = t;
            tie = false;
          } else if (z == best) {
            tie = true;
          }
        }
        const std::size_t k = wi * filters_ + f;
        cache.argmax[k] = best_t;
        cache.pooled[k] = best;
        cache.tied[k] = tie;
        out[k] = best > 0.0 ? best : 0.0;
      }
    }
    return out;
  }

  // Routes each feature's gradient to its argmax window. Returns dL/dX (n x d).
  Tensor backward(const ConvCache& cache, std::span<const double> grad_out, std::size_t n) {
    Tensor grad_padded = Tensor::matrix(cache.padded.rows(), dim_);
    const double* xp = cache.padded.data();
    double* gp = grad_padded.data();
    for (std::size_t wi = 0; wi < widths_.size(); ++wi) {
      const std::size_t span_len = widths_[wi] * dim_;
      for (std::size_t f = 0; f < filters_; ++f) {
        const std::size_t k = wi * filters_ + f;
        if (!(cache.pooled[k] > 0.0)) continue;
        const double g = grad_out[k];
        if (g == 0.0) continue;
        const std::size_t t = cache.argmax[k];
        biases_[wi].grad[f] += g;
        axpy(g, {xp + t * dim_, span_len}, weights_[wi].grad.row(f));
        axpy(g, weights_[wi].value.row(f), {gp + t * dim_, span_len});
      }
    }
    Tensor grad_x = Tensor::matrix(n, dim_);
    std::copy(gp, gp + n * dim_, grad_x.data());
    return grad_x;
  }

 private:
  std::vector<std::size_t> widths_;
  std::size_t filters_ = 0;
  std::size_t dim_ = 0;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

}  // namespace gidropout::nn
