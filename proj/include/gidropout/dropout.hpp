#pragma once

// Word-level dropout driven by per-word importance. At train time each token
// is dropped independently and its embedding row becomes the zero vector; at
// evaluation the layer is the identity. Kept rows are never rescaled.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gidropout/error.hpp"
#include "gidropout/nn/tensor.hpp"
#include "gidropout/random.hpp"
#include "gidropout/scoring.hpp"

namespace gidropout {

enum class DropoutMode { off, uniform, table };

class DropoutPolicy {
 public:
  static DropoutPolicy off() { return DropoutPolicy(DropoutMode::off, 0.0, nullptr); }

  static DropoutPolicy uniform(double p) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("uniform dropout p must lie in [0, 1)");
    return DropoutPolicy(DropoutMode::uniform, p, nullptr);
  }

  static DropoutPolicy from_table(std::shared_ptr<const ImportanceTable> table) {
    if (!table) throw ConfigError("table dropout policy requires an importance table");
    return DropoutPolicy(DropoutMode::table, 0.0, std::move(table));
  }

  DropoutMode mode() const { return mode_; }
  double p() const { return p_; }
  const ImportanceTable* table() const { return table_.get(); }

  double drop_probability(const std::string& token) const {
    switch (mode_) {
      case DropoutMode::off: return 0.0;
      case DropoutMode::uniform: return p_;
      case DropoutMode::table: return table_->prob(token);
    }
    return 0.0;
  }

 private:
  DropoutPolicy(DropoutMode mode, double p, std::shared_ptr<const ImportanceTable> table)
      : mode_(mode), p_(p), table_(std::move(table)) {}

  DropoutMode mode_;
  double p_;
  std::shared_ptr<const ImportanceTable> table_;
};

struct MaskSample {
  std::vector<bool> keep;

  std::size_t size() const { return keep.size(); }
  std::size_t dropped() const {
    std::size_t n = 0;
    for (bool k : keep) n += !k;
    return n;
  }
};

// One uniform draw per position whose drop probability is positive; the off
// mode and zero-probability words consume no randomness.
inline MaskSample sample_mask(std::span<const std::string> tokens, const DropoutPolicy& policy,
                              Rng& rng) {
  MaskSample mask{std::vector<bool>(tokens.size(), true)};
  if (policy.mode() == DropoutMode::off) return mask;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const double p = policy.drop_probability(tokens[i]);
    if (p > 0.0) mask.keep[i] = !(uniform01(rng) < p);
  }
  return mask;
}

inline DropoutPolicy eval_mode(const DropoutPolicy&) { return DropoutPolicy::off(); }

// Zeroes the rows of dropped positions; kept rows are copied bit-for-bit.
inline nn::Tensor apply(const MaskSample& mask, const nn::Tensor& embeddings) {
  if (mask.size() != embeddings.rows())
    throw ConfigError("GI-Dropout mask length " + std::to_string(mask.size()) +
                      " does not match sequence length " + std::to_string(embeddings.rows()));
  nn::Tensor out = embeddings;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.keep[i]) std::fill(out.row(i).begin(), out.row(i).end(), 0.0);
  }
  return out;
}

// The layer is linear in its input, so the backward pass is the same masking
// applied to the upstream gradient.
inline nn::Tensor apply_backward(const MaskSample& mask, const nn::Tensor& grad_out) {
  return apply(mask, grad_out);
}

}  // namespace gidropout
