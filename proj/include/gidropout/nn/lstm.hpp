#pragma once

// Standard LSTM (input, forget, cell-candidate and output gates) and its
// bidirectional wrapper. Gate pre-activations are stacked [i; f; g; o].

#include <cmath>
#include <vector>

#include "gidropout/nn/tensor.hpp"

namespace gidropout::nn {

struct LstmCache {
  Tensor inputs;  // n x d, in processing order
  Tensor gates;   // n x 4u, post-nonlinearity [i f g o]
  Tensor cells;   // n x u
  Tensor cell_tanh;
  Tensor hidden;  // n x u
};

class Lstm {
 public:
  Lstm() = default;
  Lstm(const std::string& name, std::size_t input_dim, std::size_t hidden)
      : input_w(name + ".w_input", Tensor::matrix(4 * hidden, input_dim)),
        hidden_w(name + ".w_hidden", Tensor::matrix(4 * hidden, hidden)),
        bias(name + ".bias", Tensor::vector(4 * hidden)),
        u_(hidden) {}

  Parameter input_w;
  Parameter hidden_w;
  Parameter bias;

  std::size_t hidden_size() const { return u_; }

  // Uniform(+-1/sqrt(u)) weights; forget-gate bias starts at 1.
  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(u_));
    input_w.init_uniform(rng, bound);
    hidden_w.init_uniform(rng, bound);
    bias.value.fill(0.0);
    for (std::size_t j = u_; j < 2 * u_; ++j) bias.value[j] = 1.0;
  }

  // Runs over the rows of x in order (or reversed); outputs are stored in
  // processing order inside the cache.
  void forward(const Tensor& x, bool reverse, LstmCache& c) const {
    const std::size_t n = x.rows(), d = x.cols(), u = u_;
    c.inputs = Tensor::matrix(n, d);
    for (std::size_t t = 0; t < n; ++t) {
      auto src = x.row(reverse ? n - 1 - t : t);
      std::copy(src.begin(), src.end(), c.inputs.row(t).begin());
    }
    c.gates = Tensor::matrix(n, 4 * u);
    c.cells = Tensor::matrix(n, u);
    c.cell_tanh = Tensor::matrix(n, u);
    c.hidden = Tensor::matrix(n, u);

    std::vector<double> pre(4 * u);
    for (std::size_t t = 0; t < n; ++t) {
      const auto xt = c.inputs.row(t);
      for (std::size_t j = 0; j < 4 * u; ++j) {
        double a = bias.value[j] + dot(input_w.value.row(j), xt);
        if (t > 0) a += dot(hidden_w.value.row(j), c.hidden.row(t - 1));
        pre[j] = a;
      }
      auto g = c.gates.row(t);
      for (std::size_t j = 0; j < u; ++j) {
        g[j] = sigmoid(pre[j]);                      // input
        g[u + j] = sigmoid(pre[u + j]);              // forget
        g[2 * u + j] = std::tanh(pre[2 * u + j]);    // candidate
        g[3 * u + j] = sigmoid(pre[3 * u + j]);      // output
        const double prev_c = t > 0 ? c.cells(t - 1, j) : 0.0;
        const double cell = g[u + j] * prev_c + g[j] * g[2 * u + j];
        c.cells(t, j) = cell;
        c.cell_tanh(t, j) = std::tanh(cell);
        c.hidden(t, j) = g[3 * u + j] * c.cell_tanh(t, j);
      }
    }
  }

  // grad_hidden is n x u in processing order. Returns dL/dinputs in the
  // original (unreversed) order.
  Tensor backward(const LstmCache& c, const Tensor& grad_hidden, bool reverse) {
    const std::size_t n = c.inputs.rows(), d = c.inputs.cols(), u = u_;
    Tensor grad_x = Tensor::matrix(n, d);
    std::vector<double> dh_next(u, 0.0), dc_next(u, 0.0), da(4 * u);
    for (std::size_t step = n; step-- > 0;) {
      const auto g = c.gates.row(step);
      for (std::size_t j = 0; j < u; ++j) {
        const double dh = grad_hidden(step, j) + dh_next[j];
        const double i = g[j], f = g[u + j], cand = g[2 * u + j], o = g[3 * u + j];
        const double tc = c.cell_tanh(step, j);
        const double dc = dh * o * (1.0 - tc * tc) + dc_next[j];
        const double prev_c = step > 0 ? c.cells(step - 1, j) : 0.0;
        da[j] = dc * cand * i * (1.0 - i);
        da[u + j] = dc * prev_c * f * (1.0 - f);
        da[2 * u + j] = dc * i * (1.0 - cand * cand);
        da[3 * u + j] = dh * tc * o * (1.0 - o);
        dc_next[j] = dc * f;
      }
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      auto gx = grad_x.row(reverse ? n - 1 - step : step);
      for (std::size_t j = 0; j < 4 * u; ++j) {
        const double a = da[j];
        if (a == 0.0) continue;
        bias.grad[j] += a;
        axpy(a, c.inputs.row(step), input_w.grad.row(j));
        axpy(a, input_w.value.row(j), gx);
        if (step > 0) {
          axpy(a, c.hidden.row(step - 1), hidden_w.grad.row(j));
          axpy(a, hidden_w.value.row(j), dh_next);
        }
      }
    }
    return grad_x;
  }

 private:
  std::size_t u_ = 0;
};

struct BiLstmCache {
  LstmCache forward, backward;
};

class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(std::size_t input_dim, std::size_t hidden)
      : fwd("lstm_fwd", input_dim, hidden), bwd("lstm_bwd", input_dim, hidden) {}

  Lstm fwd;
  Lstm bwd;

  std::size_t hidden_size() const { return fwd.hidden_size(); }

  void init(Rng& rng) {
    fwd.init(rng);
    bwd.init(rng);
  }

  // Returns H (n x 2u); row t is [forward h_t, backward h_t].
  Tensor forward(const Tensor& x, BiLstmCache& cache) const {
    fwd.forward(x, false, cache.forward);
    bwd.forward(x, true, cache.backward);
    const std::size_t n = x.rows(), u = hidden_size();
    Tensor h = Tensor::matrix(n, 2 * u);
    for (std::size_t t = 0; t < n; ++t) {
      auto f = cache.forward.hidden.row(t);
      auto b = cache.backward.hidden.row(n - 1 - t);
      std::copy(f.begin(), f.end(), h.row(t).begin());
      std::copy(b.begin(), b.end(), h.row(t).begin() + static_cast<std::ptrdiff_t>(u));
    }
    return h;
  }

  Tensor backward(const BiLstmCache& cache, const Tensor& grad_h) {
    const std::size_t n = grad_h.rows(), u = hidden_size();
    Tensor gf = Tensor::matrix(n, u), gb = Tensor::matrix(n, u);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < u; ++j) {
        gf(t, j) = grad_h(t, j);
        gb(n - 1 - t, j) = grad_h(t, u + j);
      }
    }
    Tensor gx = fwd.backward(cache.forward, gf, false);
    Tensor gxb = bwd.backward(cache.backward, gb, true);
    axpy(1.0, gxb.values(), gx.values());
    return gx;
  }
};

}  // namespace gidropout::nn
