#pragma once

// Dataset ingestion, tokenization, vocabulary, per-class token counts and
// cross-validation splits.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gidropout/error.hpp"
#include "gidropout/random.hpp"

namespace gidropout {

struct Example {
  int label = 0;
  std::vector<std::string> tokens;

  bool operator==(const Example&) const = default;
};

struct Dataset {
  std::string name;
  std::vector<Example> examples;
  // Original label strings; the dense label id is the position in this list.
  std::vector<std::string> label_names;

  std::size_t size() const { return examples.size(); }
  std::size_t num_classes() const { return label_names.size(); }
  bool operator==(const Dataset&) const = default;
};

namespace detail {

// Decodes one UTF-8 code point at `pos`, advancing it. Throws on malformed input.
inline char32_t decode_utf8(std::string_view s, std::size_t& pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  int len = 0;
  char32_t cp = 0;
  if (b0 < 0x80) {
    ++pos;
    return b0;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    throw DataError("invalid UTF-8 lead byte");
  }
  if (pos + len > s.size()) throw DataError("truncated UTF-8 sequence");
  for (int i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) throw DataError("invalid UTF-8 continuation byte");
    cp = (cp << 6) | (b & 0x3F);
  }
  static constexpr char32_t kMinForLen[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMinForLen[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    throw DataError("overlong or out-of-range UTF-8 sequence");
  }
  pos += len;
  return cp;
}

// White_Space property of the Unicode Character Database.
inline bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

inline void validate_utf8(std::string_view s) {
  std::size_t pos = 0;
  while (pos < s.size()) decode_utf8(s, pos);
}

inline std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

// Splits on Unicode whitespace, eliding empty tokens. Lowercasing folds ASCII
// letters only; everything else (punctuation included) is kept verbatim.
inline std::vector<std::string> tokenize(std::string_view text, bool lowercase = true) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    const char32_t cp = detail::decode_utf8(text, pos);
    if (detail::is_unicode_space(cp)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      continue;
    }
    for (std::size_t i = start; i < pos; ++i) {
      char c = text[i];
      if (lowercase && c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      current.push_back(c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

struct LoadOptions {
  bool lowercase = true;
  // When non-empty, labels are mapped onto this list instead of being
  // densified in first-appearance order (used to align train/test files).
  std::vector<std::string> label_names;
};

inline Dataset parse_dataset(std::istream& in, const std::string& name,
                             const LoadOptions& opts = {}) {
  Dataset ds;
  ds.name = name;
  ds.label_names = opts.label_names;
  const bool fixed_labels = !opts.label_names.empty();
  std::unordered_map<std::string, int> label_ids;
  for (std::size_t i = 0; i < ds.label_names.size(); ++i) {
    label_ids.emplace(ds.label_names[i], static_cast<int>(i));
  }

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto where = [&] { return name + ":" + std::to_string(line_no) + ": "; };
    try {
      detail::validate_utf8(line);
    } catch (const DataError& e) {
      throw DataError(where() + "unknown encoding (" + e.what() + ")");
    }
    if (line.empty() || line.front() == '#') continue;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(where() + "malformed line (no tab)");
    std::string label = line.substr(0, tab);
    auto tokens = tokenize(std::string_view(line).substr(tab + 1), opts.lowercase);
    if (label.empty()) throw DataError(where() + "empty label");
    if (tokens.empty()) throw DataError(where() + "example has no tokens");

    auto it = label_ids.find(label);
    if (it == label_ids.end()) {
      if (fixed_labels) throw DataError(where() + "label '" + label + "' not in label set");
      it = label_ids.emplace(label, static_cast<int>(ds.label_names.size())).first;
      ds.label_names.push_back(label);
    }
    ds.examples.push_back(Example{it->second, std::move(tokens)});
  }
  if (ds.examples.empty()) throw DataError(name + ": no examples");
  return ds;
}

inline Dataset load_dataset(const std::string& path, const LoadOptions& opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  return parse_dataset(in, path, opts);
}

// Writes `label<TAB>tokens joined by single spaces`; the inverse of
// parse_dataset modulo tokenization.
inline void write_dataset(std::ostream& out, const Dataset& ds) {
  for (const auto& ex : ds.examples) {
    out << ds.label_names.at(static_cast<std::size_t>(ex.label)) << '\t';
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      if (i) out << ' ';
      out << ex.tokens[i];
    }
    out << '\n';
  }
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file: " + path);
  write_dataset(out, ds);
}

// Content hash over labels and tokens, used to tie importance tables to the
// split they were fitted on.
inline std::uint64_t fingerprint(const Dataset& ds) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& name : ds.label_names) h = detail::fnv1a(detail::fnv1a(h, name), "\x1f");
  for (const auto& ex : ds.examples) {
    h = detail::fnv1a(h, std::to_string(ex.label));
    for (const auto& t : ex.tokens) h = detail::fnv1a(detail::fnv1a(h, "\x1e"), t);
    h = detail::fnv1a(h, "\n");
  }
  return h;
}

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> indices,
                      const std::string& suffix) {
  Dataset out;
  out.name = ds.name + suffix;
  out.label_names = ds.label_names;
  out.examples.reserve(indices.size());
  for (auto i : indices) out.examples.push_back(ds.examples.at(i));
  return out;
}

// Word <-> index map. Index 0 is padding, index 1 stands in for words never
// seen when the vocabulary was built.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary() : words_{kPadToken, kUnkToken} {
    index_.emplace(kPadToken, kPad);
    index_.emplace(kUnkToken, kUnk);
  }

  static Vocabulary from_dataset(const Dataset& ds) {
    Vocabulary v;
    for (const auto& ex : ds.examples)
      for (const auto& t : ex.tokens) v.add(t);
    return v;
  }

  std::size_t add(const std::string& word) {
    auto [it, inserted] = index_.emplace(word, words_.size());
    if (inserted) words_.push_back(word);
    return it->second;
  }

  std::size_t id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& word) const { return index_.contains(word); }
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Token occurrence counts per class: count(c, w) and total(c) = sum_w count(c, w).
struct ClassCounts {
  std::size_t num_classes = 0;
  std::map<std::string, std::vector<std::uint64_t>> by_word;
  std::vector<std::uint64_t> total;
  std::uint64_t source_fingerprint = 0;

  std::uint64_t count(std::size_t c, const std::string& w) const {
    auto it = by_word.find(w);
    return it == by_word.end() ? 0 : it->second.at(c);
  }
};

inline ClassCounts build_counts(const Dataset& train) {
  ClassCounts counts;
  counts.num_classes = train.num_classes();
  counts.total.assign(counts.num_classes, 0);
  for (const auto& ex : train.examples) {
    const auto c = static_cast<std::size_t>(ex.label);
    for (const auto& t : ex.tokens) {
      auto& row = counts.by_word[t];
      if (row.empty()) row.assign(counts.num_classes, 0);
      ++row[c];
      ++counts.total[c];
    }
  }
  counts.source_fingerprint = fingerprint(train);
  return counts;
}

struct FoldSplit {
  Dataset train;
  Dataset dev;
  Dataset test;
  std::vector<std::size_t> train_indices, dev_indices, test_indices;
};

// k-fold cross-validation. Each fold's test cell is one partition cell; a dev
// set of floor(|rest| / k) examples is carved from the rest and the remainder
// is the training split.
inline std::vector<FoldSplit> cv_split(const Dataset& data, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("cv_split: fold count must be >= 2");
  if (k > data.size()) throw ConfigError("cv_split: fold count exceeds dataset size");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(std::span(order), rng);

  std::vector<std::vector<std::size_t>> cells(k);
  for (std::size_t i = 0; i < order.size(); ++i) cells[i % k].push_back(order[i]);

  std::vector<FoldSplit> folds;
  folds.reserve(k);
  for (std::size_t f = 0; f < k; ++f) {
    FoldSplit split;
    split.test_indices = cells[f];
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < order.size(); ++i)
      if (i % k != f) rest.push_back(order[i]);
    const std::size_t n_dev = rest.size() / k;
    split.dev_indices.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_dev));
    split.train_indices.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_dev), rest.end());
    const auto tag = "/fold" + std::to_string(f);
    split.train = subset(data, split.train_indices, tag + "/train");
    split.dev = subset(data, split.dev_indices, tag + "/dev");
    split.test = subset(data, split.test_indices, tag + "/test");
    folds.push_back(std::move(split));
  }
  return folds;
}

// Carves a dev set of round(fraction * |train|) examples from a training file
// that ships without one.
inline FoldSplit holdout_split(const Dataset& train, const Dataset& test, double dev_fraction,
                               std::uint64_t seed) {
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0))
    throw ConfigError("dev_fraction must be in (0, 1)");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(std::span(order), rng);
  auto n_dev = static_cast<std::size_t>(dev_fraction * static_cast<double>(train.size()) + 0.5);
  n_dev = std::clamp<std::size_t>(n_dev, 1, train.size() - 1);

  FoldSplit split;
  split.dev_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_dev));
  split.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_dev), order.end());
  std::sort(split.train_indices.begin(), split.train_indices.end());
  std::sort(split.dev_indices.begin(), split.dev_indices.end());
  split.train = subset(train, split.train_indices, "/train");
  split.dev = subset(train, split.dev_indices, "/dev");
  split.test = test;
  split.test_indices.resize(test.size());
  std::iota(split.test_indices.begin(), split.test_indices.end(), 0);
  return split;
}

}  // namespace gidropout
