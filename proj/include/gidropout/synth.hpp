#pragma once

// Synthetic text-classification corpus with one apparent feature and one
// inapparent feature per sentence:
//   - a strong class keyword (few types, very frequent, high NB score),
//     present with probability p_strong;
//   - an independent weak class keyword (many types, each rare), present
//     with probability p_weak;
//   - background words drawn from a Zipfian distribution shared by all classes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gidropout/corpus.hpp"
#include "gidropout/error.hpp"
#include "gidropout/random.hpp"

namespace gidropout {

struct SynthConfig {
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  std::size_t num_classes = 2;
  std::size_t strong_per_class = 2;
  std::size_t weak_per_class = 60;
  std::size_t background_vocab = 500;
  double zipf_exponent = 1.0;
  std::size_t min_background = 6;
  std::size_t max_background = 14;
  double p_strong = 0.9;
  double p_weak = 0.7;
  // Probability that a sentence's strong keyword belongs to a different class.
  double strong_confusion = 0.1;
  std::uint64_t seed = 20180101;

  void validate() const {
    if (num_classes < 2) throw ConfigError("synth: need at least 2 classes");
    if (n_train == 0 || n_test == 0) throw ConfigError("synth: split sizes must be > 0");
    if (strong_per_class == 0 || weak_per_class == 0 || background_vocab == 0)
      throw ConfigError("synth: vocabulary sizes must be > 0");
    if (min_background > max_background) throw ConfigError("synth: min_background > max_background");
    for (double p : {p_strong, p_weak, strong_confusion})
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth: probabilities must lie in [0, 1]");
  }
};

class SynthCorpus {
 public:
  explicit SynthCorpus(const SynthConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    double total = 0.0;
    for (std::size_t i = 0; i < cfg_.background_vocab; ++i) {
      total += 1.0 / std::pow(static_cast<double>(i + 1), cfg_.zipf_exponent);
      cdf_.push_back(total);
    }
    for (auto& c : cdf_) c /= total;
    for (std::size_t c = 0; c < cfg_.num_classes; ++c) label_names_.push_back(std::to_string(c));
  }

  static std::string strong_word(std::size_t c, std::size_t i) {
    return "strong" + std::to_string(c) + "_" + std::to_string(i);
  }
  static std::string weak_word(std::size_t c, std::size_t i) {
    return "weak" + std::to_string(c) + "_" + std::to_string(i);
  }
  static std::string background_word(std::size_t i) { return "bg" + std::to_string(i); }

  // Returns (train, test); both are drawn from the same distribution.
  std::pair<Dataset, Dataset> generate() const {
    Rng rng(cfg_.seed);
    Dataset train = draw(cfg_.n_train, rng, "synth/train");
    Dataset test = draw(cfg_.n_test, rng, "synth/test");
    return {std::move(train), std::move(test)};
  }

 private:
  Dataset draw(std::size_t n, Rng& rng, const std::string& name) const {
    Dataset ds;
    ds.name = name;
    ds.label_names = label_names_;
    ds.examples.reserve(n);
    for (std::size_t e = 0; e < n; ++e) ds.examples.push_back(sentence(rng));
    return ds;
  }

  Example sentence(Rng& rng) const {
    Example ex;
    const std::size_t c = uniform_index(rng, cfg_.num_classes);
    ex.label = static_cast<int>(c);
    const std::size_t len =
        cfg_.min_background + uniform_index(rng, cfg_.max_background - cfg_.min_background + 1);
    for (std::size_t i = 0; i < len; ++i) ex.tokens.push_back(background_word(zipf_draw(rng)));

    const auto insert = [&](std::string w) {
      const auto at = uniform_index(rng, ex.tokens.size() + 1);
      ex.tokens.insert(ex.tokens.begin() + static_cast<std::ptrdiff_t>(at), std::move(w));
    };
    if (uniform01(rng) < cfg_.p_strong) {
      std::size_t owner = c;
      if (uniform01(rng) < cfg_.strong_confusion) {
        owner = (c + 1 + uniform_index(rng, cfg_.num_classes - 1)) % cfg_.num_classes;
      }
      insert(strong_word(owner, uniform_index(rng, cfg_.strong_per_class)));
    }
    if (uniform01(rng) < cfg_.p_weak) insert(weak_word(c, uniform_index(rng, cfg_.weak_per_class)));
    return ex;
  }

  std::size_t zipf_draw(Rng& rng) const {
    const double u = uniform01(rng);
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

  SynthConfig cfg_;
  std::vector<double> cdf_;
  std::vector<std::string> label_names_;
};

}  // namespace gidropout
