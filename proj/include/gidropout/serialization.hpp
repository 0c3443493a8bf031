#pragma once

// JSON conversions for configs and tables, the binary model checkpoint, and
// the pretrained-embedding text loader.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gidropout/corpus.hpp"
#include "gidropout/error.hpp"
#include "gidropout/models.hpp"
#include "gidropout/nn/adam.hpp"
#include "gidropout/scoring.hpp"

namespace gidropout {

using json = nlohmann::json;

// Reads `key` into `out` when present; wraps type errors as ConfigError.
template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

namespace nn {

inline void to_json(json& j, const AdamConfig& a) {
  j = json{{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

inline void from_json(const json& j, AdamConfig& a) {
  read_opt(j, "lr", a.lr);
  read_opt(j, "beta1", a.beta1);
  read_opt(j, "beta2", a.beta2);
  read_opt(j, "eps", a.eps);
}

}  // namespace nn

inline void to_json(json& j, const ModelConfig& c) {
  j = json{{"kind", to_string(c.kind)},
           {"embed_dim", c.embed_dim},
           {"vocab_size", c.vocab_size},
           {"num_classes", c.num_classes},
           {"mlp_dropout", c.mlp_dropout}};
  if (c.kind == ModelKind::cnn) {
    j["filter_widths"] = c.filter_widths;
    j["filters_per_width"] = c.filters_per_width;
  } else {
    j["lstm_hidden"] = c.lstm_hidden;
    j["attn_dim"] = c.attn_dim;
    j["attn_hops"] = c.attn_hops;
    j["mlp_hidden"] = c.mlp_hidden;
    j["penalty_coef"] = c.penalty_coef;
  }
}

inline void from_json(const json& j, ModelConfig& c) {
  std::string kind = to_string(c.kind);
  read_opt(j, "kind", kind);
  c.kind = parse_model_kind(kind);
  read_opt(j, "embed_dim", c.embed_dim);
  read_opt(j, "vocab_size", c.vocab_size);
  read_opt(j, "num_classes", c.num_classes);
  read_opt(j, "mlp_dropout", c.mlp_dropout);
  read_opt(j, "filter_widths", c.filter_widths);
  read_opt(j, "filters_per_width", c.filters_per_width);
  read_opt(j, "lstm_hidden", c.lstm_hidden);
  read_opt(j, "attn_dim", c.attn_dim);
  read_opt(j, "attn_hops", c.attn_hops);
  read_opt(j, "mlp_hidden", c.mlp_hidden);
  read_opt(j, "penalty_coef", c.penalty_coef);
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Score table as TSV: word, one column per class, max score, probability;
// sorted by probability descending (ties by word).
inline void write_score_tsv(std::ostream& out, const ImportanceTable& table,
                            const std::vector<std::string>& label_names) {
  std::vector<std::pair<const std::string*, const WordScore*>> rows;
  for (const auto& [w, s] : table.words) rows.emplace_back(&w, &s);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.second->prob > b.second->prob; });
  out << "word";
  for (std::size_t c = 0; c < table.num_classes; ++c)
    out << "\tscore_" << (c < label_names.size() ? label_names[c] : std::to_string(c));
  out << "\tmax_score\tprob\n";
  out << std::setprecision(17);
  for (const auto& [w, s] : rows) {
    out << *w;
    for (double v : s->by_class) out << '\t' << v;
    out << '\t' << s->score << '\t' << s->prob << '\n';
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (little-endian):
//   "GIDCKPT\0"  u32 version
//   u64 header length, header JSON (model config, vocabulary, label names, extra metadata)
//   u64 parameter count, then per parameter:
//     u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values[prod(dims)]

inline constexpr char kCheckpointMagic[8] = {'G', 'I', 'D', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint truncated");
  return v;
}

}  // namespace detail

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> vocabulary;
  std::vector<std::string> label_names;
  json metadata = json::object();
  std::vector<std::pair<std::string, nn::Tensor>> tensors;
};

inline void save_checkpoint(std::ostream& out, Model& model, const Vocabulary& vocab,
                            const std::vector<std::string>& label_names,
                            const json& metadata = json::object()) {
  json header{{"config", model.config()},
              {"vocabulary", vocab.words()},
              {"label_names", label_names},
              {"metadata", metadata}};
  const std::string text = header.dump();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_pod(out, kCheckpointVersion);
  detail::write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto params = model.parameters();
  detail::write_pod(out, static_cast<std::uint64_t>(params.size()));
  for (const auto* p : params) {
    detail::write_pod(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::write_pod(out, static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) detail::write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw DataError("not a gidropout checkpoint (bad magic)");
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = detail::read_pod<std::uint64_t>(in);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("checkpoint truncated");

  Checkpoint ck;
  try {
    const json header = json::parse(text);
    ck.config = header.at("config").get<ModelConfig>();
    ck.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
    ck.label_names = header.at("label_names").get<std::vector<std::string>>();
    ck.metadata = header.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }

  const auto count = detail::read_pod<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = detail::read_pod<std::uint32_t>(in);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = detail::read_pod<std::uint64_t>(in);
    nn::Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint truncated in tensor " + name);
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

// Copies checkpoint tensors into a model built from the same config.
inline void load_parameters(Model& model, const Checkpoint& ck) {
  auto params = model.parameters();
  if (params.size() != ck.tensors.size())
    throw DataError("checkpoint has " + std::to_string(ck.tensors.size()) +
                    " tensors, model expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, tensor] = ck.tensors[i];
    if (name != params[i]->name || !tensor.same_shape(params[i]->value))
      throw DataError("checkpoint tensor '" + name + "' does not match model parameter '" +
                      params[i]->name + "'");
    params[i]->value = tensor;
  }
}

inline Vocabulary vocabulary_from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  if (words.size() < 2 || words[0] != Vocabulary::kPadToken || words[1] != Vocabulary::kUnkToken)
    throw DataError("vocabulary must start with the padding and unknown tokens");
  for (std::size_t i = 2; i < words.size(); ++i) v.add(words[i]);
  return v;
}

// ---------------------------------------------------------------------------
// Pretrained embeddings: one `word v1 ... vd` line per word. Rows for words in
// the file overwrite the model's random init; returns how many were found.

inline std::size_t load_embeddings(std::istream& in, const Vocabulary& vocab, nn::Parameter& table) {
  const std::size_t dim = table.value.cols();
  std::string line;
  std::size_t line_no = 0, found = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<double> values;
    double v;
    while (ls >> v) values.push_back(v);
    if (!ls.eof()) throw DataError("embeddings line " + std::to_string(line_no) + ": bad number");
    // word2vec text files start with a "count dim" header line
    if (line_no == 1 && values.size() == 1) continue;
    if (values.size() != dim)
      throw DataError("embeddings line " + std::to_string(line_no) + ": expected " +
                      std::to_string(dim) + " values, got " + std::to_string(values.size()));
    if (!vocab.contains(word)) continue;
    const auto id = vocab.id(word);
    if (id == Vocabulary::kPad) continue;
    std::copy(values.begin(), values.end(), table.value.row(id).begin());
    ++found;
  }
  return found;
}

inline std::size_t load_embeddings(const std::string& path, const Vocabulary& vocab,
                                   nn::Parameter& table) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings file: " + path);
  return load_embeddings(in, vocab, table);
}

}  // namespace gidropout
