#pragma once

// Naive-Bayes importance scores, their mapping to drop probabilities, and the
// keyword / Zipf diagnostics built on top of them.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <functional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gidropout/corpus.hpp"
#include "gidropout/error.hpp"

namespace gidropout {

struct ScoringConfig {
  double alpha = 1.0;
  double beta = 0.95;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be > 0");
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
  }
};

// Smoothed ratio of the word's relative frequency in class c to its relative
// frequency in all other classes.
inline double nb_weight(std::uint64_t n_cw, std::uint64_t n_ocw, std::uint64_t tot_c,
                        std::uint64_t tot_oc, double alpha) {
  if (tot_c == 0 || tot_oc == 0) throw DataError("nb_weight: empty class (zero token total)");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
  const double in_class = (static_cast<double>(n_cw) + alpha) / static_cast<double>(tot_c);
  const double other = (static_cast<double>(n_ocw) + alpha) / static_cast<double>(tot_oc);
  return in_class / other;
}

// Positive, increasing frequency factor ln(n) / ln(1/beta); zero for n <= 1.
inline double freq_factor(std::uint64_t n_cw, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
  if (n_cw <= 1) return 0.0;
  return std::log(static_cast<double>(n_cw)) / -std::log(beta);
}

inline double class_score(std::uint64_t n_cw, std::uint64_t n_ocw, std::uint64_t tot_c,
                          std::uint64_t tot_oc, const ScoringConfig& config) {
  const double weight = nb_weight(n_cw, n_ocw, tot_c, tot_oc, config.alpha);
  const double factor = freq_factor(n_cw, config.beta);
  return std::max(0.0, weight * factor);
}

inline double importance(std::span<const double> scores_by_class) {
  if (scores_by_class.size() < 2) throw ConfigError("importance: need at least 2 classes");
  return *std::max_element(scores_by_class.begin(), scores_by_class.end());
}

// (e^r - 1) / (e^r + 1) evaluated as tanh(r/2). The result is capped at the
// largest double below 1 so that saturated scores still leave p < 1.
inline double drop_prob(double r) {
  if (!(r >= 0.0)) throw ConfigError("drop_prob: score must be >= 0");
  constexpr double kMaxProb = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  return std::min(std::tanh(0.5 * r), kMaxProb);
}

struct WordScore {
  std::vector<double> by_class;
  double score = 0.0;
  double prob = 0.0;

  bool operator==(const WordScore&) const = default;
};

struct ImportanceTable {
  ScoringConfig config;
  std::size_t num_classes = 0;
  std::uint64_t source_fingerprint = 0;
  std::map<std::string, WordScore> words;

  // Unseen words have score 0 and are never dropped.
  double prob(const std::string& w) const {
    auto it = words.find(w);
    return it == words.end() ? 0.0 : it->second.prob;
  }
  double score(const std::string& w) const {
    auto it = words.find(w);
    return it == words.end() ? 0.0 : it->second.score;
  }
  bool contains(const std::string& w) const { return words.contains(w); }
  std::size_t size() const { return words.size(); }

  std::uint64_t fingerprint() const {
    std::uint64_t h = source_fingerprint ^ 0x9E3779B97F4A7C15ULL;
    h = detail::fnv1a(h, std::to_string(std::bit_cast<std::uint64_t>(config.alpha)));
    h = detail::fnv1a(h, std::to_string(std::bit_cast<std::uint64_t>(config.beta)));
    return h;
  }

  // Words ordered by max score descending, ties lexicographic.
  std::vector<std::string> ranked_words() const {
    std::vector<std::pair<double, const std::string*>> order;
    order.reserve(words.size());
    for (const auto& [w, s] : words) order.emplace_back(s.score, &w);
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> out;
    out.reserve(order.size());
    for (const auto& [_, w] : order) out.push_back(*w);
    return out;
  }

  bool operator==(const ImportanceTable& o) const {
    return num_classes == o.num_classes && source_fingerprint == o.source_fingerprint &&
           config.alpha == o.config.alpha && config.beta == o.config.beta && words == o.words;
  }
};

inline ImportanceTable build_table(const ClassCounts& counts, const ScoringConfig& config) {
  config.validate();
  if (counts.num_classes < 2) throw ConfigError("build_table: need at least 2 classes");
  std::uint64_t grand_total = 0;
  for (std::size_t c = 0; c < counts.num_classes; ++c) {
    if (counts.total[c] == 0)
      throw DataError("build_table: class " + std::to_string(c) + " has no tokens");
    grand_total += counts.total[c];
  }

  ImportanceTable table;
  table.config = config;
  table.num_classes = counts.num_classes;
  table.source_fingerprint = counts.source_fingerprint;
  for (const auto& [word, n] : counts.by_word) {
    std::uint64_t word_total = 0;
    for (auto x : n) word_total += x;
    WordScore ws;
    ws.by_class.resize(counts.num_classes);
    for (std::size_t c = 0; c < counts.num_classes; ++c) {
      ws.by_class[c] = class_score(n[c], word_total - n[c], counts.total[c],
                                   grand_total - counts.total[c], config);
    }
    ws.score = importance(ws.by_class);
    ws.prob = drop_prob(ws.score);
    table.words.emplace(word, std::move(ws));
  }
  return table;
}

inline ImportanceTable build_table(const Dataset& train, const ScoringConfig& config) {
  return build_table(build_counts(train), config);
}

// The k words with the highest score for class c, descending; ties lexicographic.
inline std::vector<std::string> top_keywords(const ImportanceTable& table, std::size_t c,
                                             std::size_t k) {
  if (c >= table.num_classes) throw ConfigError("top_keywords: class out of range");
  std::vector<std::pair<double, const std::string*>> order;
  order.reserve(table.words.size());
  for (const auto& [w, s] : table.words) order.emplace_back(s.by_class[c], &w);
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return *a.second < *b.second;
                    });
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(*order[i].second);
  return out;
}

struct ZipfFit {
  double slope = 0.0;
  double r_squared = 0.0;
  std::size_t support = 0;
};

// Least-squares fit of log(p) against log(rank) for positive values, ranked in
// descending order. A perfectly flat profile reports slope 0 and r^2 = 1.
inline ZipfFit zipf_fit(std::vector<double> values) {
  std::erase_if(values, [](double p) { return !(p > 0.0); });
  if (values.size() < 3) throw DataError("zipf: insufficient support (< 3 positive values)");
  std::stable_sort(values.begin(), values.end(), std::greater<>());

  const auto n = static_cast<double>(values.size());
  double mx = 0, my = 0;
  std::vector<double> xs(values.size()), ys(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    xs[i] = std::log(static_cast<double>(i + 1));
    ys[i] = std::log(values[i]);
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  ZipfFit fit;
  fit.support = values.size();
  fit.slope = sxy / sxx;
  if (syy == 0.0) {
    fit.slope = 0.0;
    fit.r_squared = 1.0;
  } else {
    fit.r_squared = std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
  }
  return fit;
}

inline ZipfFit zipf_diagnostic(const ImportanceTable& table) {
  std::vector<double> probs;
  probs.reserve(table.size());
  for (const auto& [_, s] : table.words) probs.push_back(s.prob);
  return zipf_fit(std::move(probs));
}

// Deletes the k highest-scored words from every example. Examples emptied by
// the removal stay in the dataset as empty sequences.
inline Dataset remove_top_k(const Dataset& data, const ImportanceTable& table, std::int64_t k) {
  if (k < 0) throw ConfigError("remove_top_k: k must be >= 0");
  if (k == 0) return data;
  auto ranked = table.ranked_words();
  ranked.resize(std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k)));
  std::unordered_set<std::string> removed(ranked.begin(), ranked.end());
  Dataset out = data;
  for (auto& ex : out.examples) {
    std::erase_if(ex.tokens, [&](const std::string& t) { return removed.contains(t); });
  }
  return out;
}

}  // namespace gidropout
