#pragma once

// The two classifiers: a Kim-style CNN (conv widths + max-over-time pooling +
// one output layer) and a self-attentive biLSTM with a 2-layer ReLU MLP head.
// Both put the GI-Dropout layer directly on the word embeddings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gidropout/corpus.hpp"
#include "gidropout/dropout.hpp"
#include "gidropout/error.hpp"
#include "gidropout/nn/attention.hpp"
#include "gidropout/nn/conv.hpp"
#include "gidropout/nn/gradcheck.hpp"
#include "gidropout/nn/layers.hpp"
#include "gidropout/nn/lstm.hpp"
#include "gidropout/nn/tensor.hpp"

namespace gidropout {

enum class ModelKind { cnn, self_attn_rnn };

inline const char* to_string(ModelKind k) { return k == ModelKind::cnn ? "cnn" : "self_attn_rnn"; }

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "cnn") return ModelKind::cnn;
  if (s == "self_attn_rnn" || s == "rnn") return ModelKind::self_attn_rnn;
  throw ConfigError("unknown model kind '" + s + "'");
}

// Defaults are the desk-scale configuration. The published configuration
// (300-d embeddings, 300 filters, u=300, d_a=350, r=4, MLP 2000) is reachable
// by overriding the fields.
struct ModelConfig {
  ModelKind kind = ModelKind::cnn;
  std::size_t embed_dim = 50;
  std::size_t vocab_size = 0;
  std::size_t num_classes = 2;
  double mlp_dropout = 0.5;
  // cnn
  std::vector<std::size_t> filter_widths{3, 4, 5};
  std::size_t filters_per_width = 32;
  // self_attn_rnn
  std::size_t lstm_hidden = 32;
  std::size_t attn_dim = 32;
  std::size_t attn_hops = 2;
  std::size_t mlp_hidden = 64;
  double penalty_coef = 1.0;

  void validate() const {
    if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2 (padding + unknown)");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (!(mlp_dropout >= 0.0 && mlp_dropout < 1.0))
      throw ConfigError("mlp_dropout must lie in [0, 1)");
    if (kind == ModelKind::cnn) {
      if (filter_widths.empty()) throw ConfigError("filter_widths must be non-empty");
      for (std::size_t i = 0; i < filter_widths.size(); ++i) {
        if (filter_widths[i] < 1) throw ConfigError("filter widths must be >= 1");
        if (i && filter_widths[i] <= filter_widths[i - 1])
          throw ConfigError("filter widths must be strictly ascending");
      }
      if (filters_per_width < 1) throw ConfigError("filters_per_width must be >= 1");
    } else {
      if (lstm_hidden < 1 || attn_dim < 1 || attn_hops < 1 || mlp_hidden < 1)
        throw ConfigError("rnn sizes must be >= 1");
      if (!(penalty_coef >= 0.0)) throw ConfigError("penalty_coef must be >= 0");
    }
  }
};

enum class Phase { train, eval };

struct Prediction {
  std::vector<double> probs;
  std::size_t label = 0;
};

// Token ids for the embedding lookup plus the raw tokens for the GI table.
struct ModelInput {
  std::vector<std::size_t> ids;
  std::vector<std::string> tokens;
  std::size_t label = 0;

  static ModelInput encode(const Example& ex, const Vocabulary& vocab) {
    return {vocab.encode(ex.tokens), ex.tokens, static_cast<std::size_t>(ex.label)};
  }
};

inline std::vector<ModelInput> encode_all(const Dataset& ds, const Vocabulary& vocab) {
  std::vector<ModelInput> out;
  out.reserve(ds.size());
  for (const auto& ex : ds.examples) out.push_back(ModelInput::encode(ex, vocab));
  return out;
}

// Everything the backward pass needs from one forward pass.
struct ForwardTrace {
  std::vector<std::size_t> ids;
  bool gi_applied = false;
  MaskSample gi_mask;
  std::size_t tokens = 0;
  nn::Tensor embedded;  // after GI-Dropout (and the padding row for empty RNN input)
  nn::ConvCache conv;
  nn::BiLstmCache lstm;
  nn::AttentionCache attn_cache;
  nn::AttentionOutput attention;
  std::vector<double> flat;       // flattened M
  std::vector<double> hidden;     // MLP hidden (post-ReLU)
  std::vector<double> head_scale; // unit-dropout scale in front of the output layer
  std::vector<double> head_in;
  std::vector<double> logits;
  double penalty = 0.0;
  nn::Tensor penalty_grad;

  std::uint64_t branches() const {
    std::uint64_t h = conv.signature();
    for (double x : hidden) h = (h ^ static_cast<std::uint64_t>(x > 0.0)) * 0x100000001B3ULL;
    return h;
  }
};

struct ForwardOptions {
  Phase phase = Phase::eval;
  // nullptr builds the network without a GI-Dropout layer at all.
  const DropoutPolicy* gi = nullptr;
  Rng* rng = nullptr;
};

class Model {
 public:
  Model(const ModelConfig& config, Rng& init_rng) : config_(config) {
    config_.validate();
    embedding_ = nn::Parameter("embedding", nn::Tensor::matrix(config_.vocab_size, config_.embed_dim));
    embedding_.init_uniform(init_rng, 0.25);
    std::fill(embedding_.value.row(Vocabulary::kPad).begin(),
              embedding_.value.row(Vocabulary::kPad).end(), 0.0);
    if (config_.kind == ModelKind::cnn) {
      conv_ = nn::ConvBank(config_.filter_widths, config_.filters_per_width, config_.embed_dim);
      conv_.init(init_rng);
      output_ = nn::Dense("output", conv_.output_dim(), config_.num_classes, nn::Activation::none);
    } else {
      lstm_ = nn::BiLstm(config_.embed_dim, config_.lstm_hidden);
      lstm_.init(init_rng);
      attention_ = nn::SelfAttention(2 * config_.lstm_hidden, config_.attn_dim, config_.attn_hops);
      attention_.init(init_rng);
      hidden_ = nn::Dense("mlp_hidden", config_.attn_hops * 2 * config_.lstm_hidden,
                          config_.mlp_hidden, nn::Activation::relu);
      hidden_.init(init_rng);
      output_ = nn::Dense("output", config_.mlp_hidden, config_.num_classes, nn::Activation::none);
    }
    output_.init(init_rng);
  }

  const ModelConfig& config() const { return config_; }

  // Stable order; checkpoints and the optimizer rely on it.
  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> ps{&embedding_};
    if (config_.kind == ModelKind::cnn) {
      for (std::size_t i = 0; i < conv_.widths().size(); ++i) {
        ps.push_back(&conv_.weight(i));
        ps.push_back(&conv_.bias(i));
      }
    } else {
      for (nn::Lstm* l : {&lstm_.fwd, &lstm_.bwd}) {
        ps.push_back(&l->input_w);
        ps.push_back(&l->hidden_w);
        ps.push_back(&l->bias);
      }
      ps.push_back(&attention_.w_s1);
      ps.push_back(&attention_.w_s2);
      ps.push_back(&hidden_.weight);
      ps.push_back(&hidden_.bias);
    }
    ps.push_back(&output_.weight);
    ps.push_back(&output_.bias);
    return ps;
  }

  std::vector<const nn::Parameter*> parameters() const {
    auto ps = const_cast<Model*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  nn::Parameter& embedding() { return embedding_; }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  Prediction forward(const ModelInput& in, const ForwardOptions& opts,
                     ForwardTrace* trace = nullptr) const {
    ForwardTrace local;
    ForwardTrace& tr = trace ? *trace : local;
    const bool training = opts.phase == Phase::train;
    if (training && !opts.rng) throw ConfigError("train-phase forward requires an rng");

    nn::Tensor x = nn::embed_lookup(in.ids, embedding_);
    tr.ids = in.ids;
    tr.tokens = in.ids.size();
    tr.gi_applied = opts.gi != nullptr;
    if (opts.gi) {
      const DropoutPolicy policy = training ? *opts.gi : eval_mode(*opts.gi);
      if (training) {
        tr.gi_mask = sample_mask(in.tokens, policy, *opts.rng);
      } else {
        tr.gi_mask = MaskSample{std::vector<bool>(in.tokens.size(), true)};
      }
      x = apply(tr.gi_mask, x);
    }

    std::span<const double> head_in;
    if (config_.kind == ModelKind::cnn) {
      tr.embedded = std::move(x);
      auto features = conv_.forward(tr.embedded, tr.conv);
      tr.head_scale = training ? nn::sample_unit_dropout(features.size(), config_.mlp_dropout, *opts.rng)
                               : std::vector<double>(features.size(), 1.0);
      tr.head_in = nn::apply_scale(features, tr.head_scale);
    } else {
      if (x.rows() == 0) x = nn::Tensor::matrix(1, config_.embed_dim);
      tr.embedded = std::move(x);
      nn::Tensor states = lstm_.forward(tr.embedded, tr.lstm);
      tr.attention = attention_.forward(states, tr.attn_cache);
      auto m = tr.attention.embedding.values();
      tr.flat.assign(m.begin(), m.end());
      tr.hidden = hidden_.forward(tr.flat);
      tr.head_scale = training ? nn::sample_unit_dropout(tr.hidden.size(), config_.mlp_dropout, *opts.rng)
                               : std::vector<double>(tr.hidden.size(), 1.0);
      tr.head_in = nn::apply_scale(tr.hidden, tr.head_scale);
      auto pen = nn::attention_penalty(tr.attention.annotation);
      tr.penalty = pen.value;
      tr.penalty_grad = std::move(pen.grad);
    }
    tr.logits = output_.forward(tr.head_in);
    for (double z : tr.logits)
      if (!std::isfinite(z)) throw DivergenceError("non-finite logits in model forward");

    Prediction pred;
    pred.probs = nn::softmax(tr.logits);
    pred.label = static_cast<std::size_t>(
        std::max_element(pred.probs.begin(), pred.probs.end()) - pred.probs.begin());
    return pred;
  }

  Prediction predict(const ModelInput& in, const DropoutPolicy* gi = nullptr) const {
    return forward(in, ForwardOptions{Phase::eval, gi, nullptr});
  }

  // Per-example objective: cross-entropy, plus the attention penalty for the
  // recurrent model.
  double example_loss(const ForwardTrace& tr, std::size_t label) const {
    double loss = nn::softmax_ce(tr.logits, label).loss;
    if (config_.kind == ModelKind::self_attn_rnn) loss += config_.penalty_coef * tr.penalty;
    return loss;
  }

  // Accumulates weight * d(example_loss)/d(params) into the .grad tensors.
  void backward(const ForwardTrace& tr, std::size_t label, double weight) {
    auto ce = nn::softmax_ce(tr.logits, label);
    for (auto& g : ce.grad) g *= weight;
    auto grad_head = output_.backward(tr.head_in, tr.logits, ce.grad);
    for (std::size_t i = 0; i < grad_head.size(); ++i) grad_head[i] *= tr.head_scale[i];

    nn::Tensor grad_x;
    if (config_.kind == ModelKind::cnn) {
      grad_x = conv_.backward(tr.conv, grad_head, tr.embedded.rows());
    } else {
      auto grad_flat = hidden_.backward(tr.flat, tr.hidden, grad_head);
      const std::size_t r = config_.attn_hops, dh = 2 * config_.lstm_hidden;
      nn::Tensor grad_m = nn::Tensor::matrix(r, dh);
      std::copy(grad_flat.begin(), grad_flat.end(), grad_m.data());
      nn::Tensor grad_a = tr.penalty_grad;
      for (auto& g : grad_a.values()) g *= weight * config_.penalty_coef;
      nn::Tensor grad_h = attention_.backward(tr.attn_cache, tr.attention.annotation, grad_m, grad_a);
      grad_x = lstm_.backward(tr.lstm, grad_h);
    }
    if (tr.tokens == 0) return;  // all-padding input
    if (tr.gi_applied) grad_x = apply_backward(tr.gi_mask, grad_x);
    nn::embed_lookup_backward(tr.ids, grad_x, embedding_);
  }

 private:
  ModelConfig config_;
  nn::Parameter embedding_;
  nn::ConvBank conv_;
  nn::BiLstm lstm_;
  nn::SelfAttention attention_;
  nn::Dense hidden_;
  nn::Dense output_;
};

// Mean training objective over a batch. Draws GI and unit-dropout noise from
// `rng` in example order.
inline nn::LossEval batch_loss(const Model& model, std::span<const ModelInput> batch,
                               const DropoutPolicy* gi, Rng& rng, Phase phase = Phase::train) {
  if (batch.empty()) throw ConfigError("batch must be non-empty");
  nn::LossEval out;
  ForwardTrace tr;
  for (const auto& ex : batch) {
    model.forward(ex, ForwardOptions{phase, gi, &rng}, &tr);
    out.loss += model.example_loss(tr, ex.label);
    out.branches = (out.branches * 0x100000001B3ULL) ^ tr.branches();
  }
  out.loss /= static_cast<double>(batch.size());
  return out;
}

// Zeroes all gradients, then fills them with d(mean loss)/d(params).
inline double loss_and_grads(Model& model, std::span<const ModelInput> batch,
                             const DropoutPolicy* gi, Rng& rng) {
  if (batch.empty()) throw ConfigError("batch must be non-empty");
  model.zero_grad();
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  ForwardTrace tr;
  for (const auto& ex : batch) {
    model.forward(ex, ForwardOptions{Phase::train, gi, &rng}, &tr);
    total += model.example_loss(tr, ex.label);
    model.backward(tr, ex.label, weight);
  }
  const double mean = total * weight;
  if (!std::isfinite(mean)) throw DivergenceError("non-finite training loss");
  return mean;
}

}  // namespace gidropout
