#pragma once

// Training with early stopping, and the experiment protocols built on it:
// baseline vs uniform word dropout vs GI-Dropout, the beta sweep, and the
// top-k apparent-word ablation.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gidropout/corpus.hpp"
#include "gidropout/dropout.hpp"
#include "gidropout/error.hpp"
#include "gidropout/models.hpp"
#include "gidropout/nn/adam.hpp"
#include "gidropout/random.hpp"
#include "gidropout/scoring.hpp"
#include "gidropout/serialization.hpp"

namespace gidropout::harness {

// ---------------------------------------------------------------------------
// Specs

struct PolicySpec {
  DropoutMode mode = DropoutMode::off;
  double p = 0.0;      // uniform
  double beta = 0.95;  // table
  double alpha = 1.0;  // table

  static PolicySpec off() { return {}; }
  static PolicySpec uniform(double p) { return {DropoutMode::uniform, p, 0.95, 1.0}; }
  static PolicySpec table(double beta, double alpha = 1.0) {
    return {DropoutMode::table, 0.0, beta, alpha};
  }

  void validate() const {
    if (mode == DropoutMode::uniform && !(p >= 0.0 && p < 1.0))
      throw ConfigError("policy p must lie in [0, 1)");
    if (mode == DropoutMode::table) ScoringConfig{alpha, beta}.validate();
  }
};

inline const char* to_string(DropoutMode m) {
  switch (m) {
    case DropoutMode::off: return "off";
    case DropoutMode::uniform: return "uniform";
    case DropoutMode::table: return "table";
  }
  return "off";
}

inline DropoutMode parse_dropout_mode(const std::string& s) {
  if (s == "off" || s == "baseline") return DropoutMode::off;
  if (s == "uniform" || s == "same") return DropoutMode::uniform;
  if (s == "table" || s == "gi") return DropoutMode::table;
  throw ConfigError("unknown dropout mode '" + s + "'");
}

struct TrainOptions {
  nn::AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be > 0");
  }
};

struct ExperimentSpec {
  // Either one file split by k-fold CV (`data` + `folds` >= 2) or separate
  // train/test files with an optional dev file.
  std::string data;
  std::string train;
  std::string dev;
  std::string test;
  std::string embeddings;
  bool lowercase = true;
  std::size_t folds = 0;
  // Use only the first `max_folds` CV folds (0 = all).
  std::size_t max_folds = 0;
  double dev_fraction = 0.1;
  std::uint64_t split_seed = 7;

  ModelConfig model;
  PolicySpec policy;
  TrainOptions training;
  std::vector<std::uint64_t> seeds{1};
  std::vector<double> beta_grid;
  std::vector<double> p_grid;
  std::vector<std::int64_t> ablation_k{0, 50};
  std::size_t threads = 1;

  void validate() const {
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (folds == 1) throw ConfigError("folds must be 0 (use train/test files) or >= 2");
    if (folds == 0 && (train.empty() || test.empty()) && data.empty())
      throw ConfigError("spec needs either data + folds or train + test paths");
    for (double b : beta_grid)
      if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta grid values must lie in (0, 1)");
    for (double p : p_grid)
      if (!(p >= 0.0 && p < 1.0)) throw ConfigError("p grid values must lie in [0, 1)");
    for (auto k : ablation_k)
      if (k < 0) throw ConfigError("ablation k must be >= 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    policy.validate();
    training.validate();
  }
};

inline void to_json(json& j, const PolicySpec& p) {
  j = json{{"mode", to_string(p.mode)}};
  if (p.mode == DropoutMode::uniform) j["p"] = p.p;
  if (p.mode == DropoutMode::table) {
    j["beta"] = p.beta;
    j["alpha"] = p.alpha;
  }
}

inline void from_json(const json& j, PolicySpec& p) {
  std::string mode = to_string(p.mode);
  read_opt(j, "mode", mode);
  p.mode = parse_dropout_mode(mode);
  read_opt(j, "p", p.p);
  read_opt(j, "beta", p.beta);
  read_opt(j, "alpha", p.alpha);
}

inline void to_json(json& j, const TrainOptions& t) {
  j = json{{"adam", t.adam},
           {"batch_size", t.batch_size},
           {"max_epochs", t.max_epochs},
           {"patience", t.patience}};
}

inline void from_json(const json& j, TrainOptions& t) {
  read_opt(j, "adam", t.adam);
  read_opt(j, "lr", t.adam.lr);
  read_opt(j, "batch_size", t.batch_size);
  read_opt(j, "max_epochs", t.max_epochs);
  read_opt(j, "patience", t.patience);
}

inline void to_json(json& j, const ExperimentSpec& s) {
  j = json{{"data", s.data},         {"train", s.train},
           {"dev", s.dev},           {"test", s.test},
           {"embeddings", s.embeddings}, {"lowercase", s.lowercase},
           {"folds", s.folds},       {"max_folds", s.max_folds},
           {"dev_fraction", s.dev_fraction}, {"split_seed", s.split_seed},
           {"model", s.model},       {"policy", s.policy},
           {"training", s.training}, {"seeds", s.seeds},
           {"beta_grid", s.beta_grid}, {"p_grid", s.p_grid},
           {"ablation_k", s.ablation_k}};
}

inline void from_json(const json& j, ExperimentSpec& s) {
  if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
  read_opt(j, "data", s.data);
  read_opt(j, "train", s.train);
  read_opt(j, "dev", s.dev);
  read_opt(j, "test", s.test);
  read_opt(j, "embeddings", s.embeddings);
  read_opt(j, "lowercase", s.lowercase);
  read_opt(j, "folds", s.folds);
  read_opt(j, "max_folds", s.max_folds);
  read_opt(j, "dev_fraction", s.dev_fraction);
  read_opt(j, "split_seed", s.split_seed);
  read_opt(j, "model", s.model);
  read_opt(j, "policy", s.policy);
  read_opt(j, "training", s.training);
  read_opt(j, "seeds", s.seeds);
  read_opt(j, "beta_grid", s.beta_grid);
  read_opt(j, "p_grid", s.p_grid);
  read_opt(j, "ablation_k", s.ablation_k);
  read_opt(j, "threads", s.threads);
}

// Relative paths in a spec file resolve against the spec's directory.
inline ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  auto spec = j.get<ExperimentSpec>();
  const auto dir = std::filesystem::path(path).parent_path();
  for (std::string* p : {&spec.data, &spec.train, &spec.dev, &spec.test, &spec.embeddings}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (dir / *p).string();
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Data preparation

inline std::vector<FoldSplit> prepare_folds(const ExperimentSpec& spec) {
  LoadOptions opts;
  opts.lowercase = spec.lowercase;
  if (spec.folds >= 2) {
    if (spec.data.empty()) throw ConfigError("cross-validation needs a `data` path");
    auto folds = cv_split(load_dataset(spec.data, opts), spec.folds, spec.split_seed);
    if (spec.max_folds > 0 && spec.max_folds < folds.size()) folds.resize(spec.max_folds);
    return folds;
  }
  const std::string train_path = spec.train.empty() ? spec.data : spec.train;
  Dataset train = load_dataset(train_path, opts);
  LoadOptions aligned = opts;
  aligned.label_names = train.label_names;
  Dataset test = load_dataset(spec.test, aligned);
  if (!spec.dev.empty()) {
    FoldSplit split;
    split.dev = load_dataset(spec.dev, aligned);
    split.train = std::move(train);
    split.test = std::move(test);
    split.train_indices.resize(split.train.size());
    std::iota(split.train_indices.begin(), split.train_indices.end(), 0);
    split.dev_indices.resize(split.dev.size());
    std::iota(split.dev_indices.begin(), split.dev_indices.end(), 0);
    split.test_indices.resize(split.test.size());
    std::iota(split.test_indices.begin(), split.test_indices.end(), 0);
    return {std::move(split)};
  }
  return {holdout_split(train, test, spec.dev_fraction, spec.split_seed)};
}

// ---------------------------------------------------------------------------
// Early stopping

// Tracks the best dev accuracy; stops after `patience` consecutive
// evaluations without strict improvement or at `max_epochs`.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, std::size_t max_epochs)
      : patience_(patience), max_epochs_(max_epochs) {}

  // Returns true when `dev_accuracy` is a new best (ties keep the earlier epoch).
  bool observe(double dev_accuracy) {
    ++epochs_;
    if (epochs_ == 1 || dev_accuracy > best_) {
      best_ = dev_accuracy;
      best_epoch_ = epochs_;
      return true;
    }
    return false;
  }

  bool should_stop() const {
    return epochs_ >= max_epochs_ || epochs_ - best_epoch_ >= patience_;
  }
  bool stopped_early() const { return epochs_ < max_epochs_ && should_stop(); }

  std::size_t epochs() const { return epochs_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_, max_epochs_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
};

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct TrainReport {
  std::uint64_t seed = 0;
  std::size_t fold = 0;
  PolicySpec policy;
  ModelConfig model;
  TrainOptions training;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_dev_accuracy = 0.0;
  double test_accuracy = 0.0;
  bool stopped_early = false;
  std::uint64_t train_fingerprint = 0;
  std::optional<std::uint64_t> table_fingerprint;
  // Not part of the JSON form so that reports are reproducible byte-for-byte.
  double wall_seconds = 0.0;
};

inline void to_json(json& j, const TrainReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_accuracy", e.dev_accuracy}});
  j = json{{"seed", r.seed},
           {"fold", r.fold},
           {"policy", r.policy},
           {"model", r.model},
           {"training", r.training},
           {"epochs", epochs},
           {"best_epoch", r.best_epoch},
           {"best_dev_accuracy", r.best_dev_accuracy},
           {"test_accuracy", r.test_accuracy},
           {"stopped_early", r.stopped_early},
           {"train_fingerprint", hex64(r.train_fingerprint)},
           {"table_fingerprint",
            r.table_fingerprint ? json(hex64(*r.table_fingerprint)) : json(nullptr)}};
}

inline double accuracy(const Model& model, std::span<const ModelInput> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) correct += model.predict(ex).label == ex.label;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

struct TrainResult {
  TrainReport report;
  std::unique_ptr<Model> model;  // parameters of the best dev epoch
  Vocabulary vocab;
  std::shared_ptr<const ImportanceTable> table;  // null unless policy is table
};

inline DropoutPolicy make_policy(const PolicySpec& spec, const Dataset& train,
                                 std::shared_ptr<const ImportanceTable>* table_out = nullptr) {
  switch (spec.mode) {
    case DropoutMode::off: return DropoutPolicy::off();
    case DropoutMode::uniform: return DropoutPolicy::uniform(spec.p);
    case DropoutMode::table: {
      auto table = std::make_shared<const ImportanceTable>(
          build_table(train, ScoringConfig{spec.alpha, spec.beta}));
      if (table_out) *table_out = table;
      return DropoutPolicy::from_table(std::move(table));
    }
  }
  return DropoutPolicy::off();
}

struct TrainInputs {
  const FoldSplit& split;
  std::size_t fold = 0;
  ModelConfig model;
  PolicySpec policy;
  TrainOptions training;
  std::uint64_t seed = 1;
  std::string embeddings;
};

// Fits the importance table (when needed) on the fold's training split only,
// trains with Adam on shuffled minibatches, keeps the parameters of the best
// dev epoch and measures test accuracy once with them.
inline TrainResult train(const TrainInputs& in) {
  const auto start = std::chrono::steady_clock::now();
  in.policy.validate();
  in.training.validate();

  TrainResult result;
  result.vocab = Vocabulary::from_dataset(in.split.train);
  ModelConfig cfg = in.model;
  cfg.vocab_size = result.vocab.size();
  cfg.num_classes = in.split.train.num_classes();

  const DropoutPolicy policy = make_policy(in.policy, in.split.train, &result.table);

  Rng init_rng(derive_seed(in.seed, 1));
  result.model = std::make_unique<Model>(cfg, init_rng);
  Model& model = *result.model;
  if (!in.embeddings.empty()) load_embeddings(in.embeddings, result.vocab, model.embedding());

  const auto train_set = encode_all(in.split.train, result.vocab);
  const auto dev_set = encode_all(in.split.dev, result.vocab);
  const auto test_set = encode_all(in.split.test, result.vocab);

  TrainReport& report = result.report;
  report.seed = in.seed;
  report.fold = in.fold;
  report.policy = in.policy;
  report.model = cfg;
  report.training = in.training;
  report.train_fingerprint = fingerprint(in.split.train);
  if (result.table) report.table_fingerprint = result.table->fingerprint();

  Rng rng(derive_seed(in.seed, 2));
  auto params = model.parameters();
  std::vector<nn::Tensor> best_values;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<ModelInput> batch;
  EarlyStopper stopper(in.training.patience, in.training.max_epochs);
  std::size_t step = 0;

  while (!stopper.should_stop()) {
    const std::size_t epoch = stopper.epochs() + 1;
    shuffle(std::span(order), rng);
    double loss_sum = 0.0;
    try {
      for (std::size_t b = 0; b < order.size(); b += in.training.batch_size) {
        const std::size_t end = std::min(order.size(), b + in.training.batch_size);
        batch.clear();
        for (std::size_t i = b; i < end; ++i) batch.push_back(train_set[order[i]]);
        loss_sum += loss_and_grads(model, batch, &policy, rng) * static_cast<double>(batch.size());
        nn::adam_step(params, in.training.adam, ++step);
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string("training diverged at epoch ") + std::to_string(epoch) +
                                ": " + e.what(),
                            static_cast<int>(epoch));
    }
    const double dev_acc = accuracy(model, dev_set);
    report.epochs.push_back({epoch, loss_sum / static_cast<double>(order.size()), dev_acc});
    if (stopper.observe(dev_acc)) {
      best_values.clear();
      for (const auto* p : params) best_values.push_back(p->value);
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  report.best_epoch = stopper.best_epoch();
  report.best_dev_accuracy = stopper.best();
  report.stopped_early = stopper.stopped_early();
  report.test_accuracy = accuracy(model, test_set);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Parallel execution of independent runs. Results land at their job index,
// so aggregation order never depends on scheduling.

template <typename Result>
std::vector<Result> run_jobs(std::size_t count, std::size_t threads,
                             const std::function<Result(std::size_t)>& job) {
  std::vector<std::optional<Result>> slots(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i].emplace(job(i));
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  std::vector<Result> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
  std::size_t n = 0;
};

inline Summary summarize(std::span<const double> xs) {
  Summary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct RunOutcome {
  double dev = 0.0;
  double test = 0.0;
};

struct ArmResult {
  std::string arm;  // baseline | dropout_same | gi_dropout
  PolicySpec policy;
  Summary dev;
  Summary test;
  std::vector<double> test_runs;  // per (fold, seed), fold-major
};

inline void to_json(json& j, const Summary& s) {
  j = json{{"mean", s.mean}, {"std", s.stddev}, {"n", s.n}};
}

inline void to_json(json& j, const ArmResult& a) {
  j = json{{"arm", a.arm}, {"policy", a.policy}, {"dev", a.dev}, {"test", a.test},
           {"test_runs", a.test_runs}};
}

namespace detail {

// Trains every (policy, fold, seed) combination and summarizes per policy.
inline std::vector<ArmResult> evaluate_policies(const ExperimentSpec& spec,
                                                const std::vector<FoldSplit>& folds,
                                                const std::vector<std::pair<std::string, PolicySpec>>& arms) {
  const std::size_t per_arm = folds.size() * spec.seeds.size();
  auto runs = run_jobs<RunOutcome>(arms.size() * per_arm, spec.threads, [&](std::size_t job) {
    const auto& policy = arms[job / per_arm].second;
    const std::size_t rest = job % per_arm;
    const std::size_t fold = rest / spec.seeds.size();
    const auto seed = spec.seeds[rest % spec.seeds.size()];
    auto r = train(TrainInputs{folds[fold], fold, spec.model, policy, spec.training, seed,
                               spec.embeddings});
    return RunOutcome{r.report.best_dev_accuracy, r.report.test_accuracy};
  });
  std::vector<ArmResult> out;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    ArmResult res{arms[a].first, arms[a].second, {}, {}, {}};
    std::vector<double> devs;
    for (std::size_t i = 0; i < per_arm; ++i) {
      devs.push_back(runs[a * per_arm + i].dev);
      res.test_runs.push_back(runs[a * per_arm + i].test);
    }
    res.dev = summarize(devs);
    res.test = summarize(res.test_runs);
    out.push_back(std::move(res));
  }
  return out;
}

// Highest mean dev accuracy; ties go to the earlier grid entry.
inline std::size_t best_by_dev(std::span<const ArmResult> arms) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < arms.size(); ++i)
    if (arms[i].dev.mean > arms[best].dev.mean) best = i;
  return best;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Three-way comparison

struct CompareResult {
  ArmResult baseline;
  ArmResult dropout_same;  // at p*
  ArmResult gi_dropout;    // at beta*
  std::vector<ArmResult> p_grid;
  std::vector<ArmResult> beta_grid;
};

inline void to_json(json& j, const CompareResult& c) {
  j = json{{"baseline", c.baseline},
           {"dropout_same", c.dropout_same},
           {"gi_dropout", c.gi_dropout},
           {"p_grid", c.p_grid},
           {"beta_grid", c.beta_grid}};
}

// p* and beta* are picked by mean dev accuracy pooled over folds and seeds.
inline CompareResult compare(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.p_grid.empty() || spec.beta_grid.empty())
    throw ConfigError("compare needs non-empty p_grid and beta_grid");
  const auto folds = prepare_folds(spec);
  std::vector<std::pair<std::string, PolicySpec>> arms{{"baseline", PolicySpec::off()}};
  for (double p : spec.p_grid) arms.emplace_back("dropout_same", PolicySpec::uniform(p));
  for (double b : spec.beta_grid)
    arms.emplace_back("gi_dropout", PolicySpec::table(b, spec.policy.alpha));
  auto results = detail::evaluate_policies(spec, folds, arms);

  CompareResult out;
  out.baseline = results[0];
  const auto np = spec.p_grid.size();
  out.p_grid.assign(results.begin() + 1, results.begin() + 1 + static_cast<std::ptrdiff_t>(np));
  out.beta_grid.assign(results.begin() + 1 + static_cast<std::ptrdiff_t>(np), results.end());
  out.dropout_same = out.p_grid[detail::best_by_dev(out.p_grid)];
  out.gi_dropout = out.beta_grid[detail::best_by_dev(out.beta_grid)];
  return out;
}

// ---------------------------------------------------------------------------
// Beta sweep

struct SweepRow {
  double beta = 0.0;
  Summary dev;
  Summary test;
  std::optional<ZipfFit> zipf;  // fit on the first fold's training table
};

inline void to_json(json& j, const SweepRow& r) {
  j = json{{"beta", r.beta}, {"dev", r.dev}, {"test", r.test}};
  if (r.zipf) {
    j["zipf"] = {{"slope", r.zipf->slope}, {"r_squared", r.zipf->r_squared},
                 {"support", r.zipf->support}};
  } else {
    j["zipf"] = nullptr;
  }
}

// Rows come back sorted by beta descending.
inline std::vector<SweepRow> sweep_beta(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.beta_grid.empty()) throw ConfigError("sweep-beta needs a non-empty beta_grid");
  auto betas = spec.beta_grid;
  std::sort(betas.begin(), betas.end(), std::greater<>());
  const auto folds = prepare_folds(spec);
  std::vector<std::pair<std::string, PolicySpec>> arms;
  for (double b : betas) arms.emplace_back("gi_dropout", PolicySpec::table(b, spec.policy.alpha));
  const auto results = detail::evaluate_policies(spec, folds, arms);

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    SweepRow row{betas[i], results[i].dev, results[i].test, std::nullopt};
    try {
      row.zipf = zipf_diagnostic(build_table(folds.front().train, {spec.policy.alpha, betas[i]}));
    } catch (const DataError&) {
      // fewer than three words with positive probability
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Top-k apparent-word ablation

struct AblationRow {
  std::int64_t k = 0;
  Summary baseline;
  Summary gi;
  double baseline_drop = 0.0;  // mean accuracy at k=0 minus mean accuracy at k
  double gi_drop = 0.0;
};

inline void to_json(json& j, const AblationRow& r) {
  j = json{{"k", r.k},
           {"baseline", r.baseline},
           {"gi_dropout", r.gi},
           {"baseline_drop", r.baseline_drop},
           {"gi_drop", r.gi_drop}};
}

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<double> baseline_test;  // unablated, per run
  std::vector<double> gi_test;
};

inline void to_json(json& j, const AblationResult& a) {
  j = json{{"rows", a.rows}, {"baseline_test", a.baseline_test}, {"gi_test", a.gi_test}};
}

// Accuracy of both arms on test splits with the top-k words (ranked by the
// fold's training-split importance table) deleted.
inline std::vector<double> ablation_curve(const TrainResult& run, const Dataset& test,
                                          const ImportanceTable& ranking,
                                          std::span<const std::int64_t> ks) {
  std::vector<double> accs;
  for (auto k : ks) {
    const auto ablated = encode_all(remove_top_k(test, ranking, k), run.vocab);
    accs.push_back(accuracy(*run.model, ablated));
  }
  return accs;
}

inline AblationResult ablate(const ExperimentSpec& spec, std::vector<std::int64_t> ks) {
  spec.validate();
  if (spec.policy.mode != DropoutMode::table)
    throw ConfigError("ablate needs a table (GI-Dropout) policy in the spec");
  if (ks.empty()) throw ConfigError("ablate needs a non-empty k list");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() != 0) ks.insert(ks.begin(), 0);

  const auto folds = prepare_folds(spec);
  const std::size_t per_arm = folds.size() * spec.seeds.size();
  struct Curves {
    double unablated = 0.0;
    std::vector<double> accs;
  };
  auto curves = run_jobs<Curves>(2 * per_arm, spec.threads, [&](std::size_t job) {
    const bool gi = job >= per_arm;
    const std::size_t rest = job % per_arm;
    const std::size_t fold = rest / spec.seeds.size();
    const auto seed = spec.seeds[rest % spec.seeds.size()];
    const PolicySpec policy = gi ? spec.policy : PolicySpec::off();
    auto run = train(TrainInputs{folds[fold], fold, spec.model, policy, spec.training, seed,
                                 spec.embeddings});
    const auto ranking = build_table(folds[fold].train, ScoringConfig{spec.policy.alpha, spec.policy.beta});
    return Curves{run.report.test_accuracy, ablation_curve(run, folds[fold].test, ranking, ks)};
  });

  AblationResult out;
  for (std::size_t i = 0; i < per_arm; ++i) {
    out.baseline_test.push_back(curves[i].unablated);
    out.gi_test.push_back(curves[per_arm + i].unablated);
  }
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    std::vector<double> b, g;
    for (std::size_t i = 0; i < per_arm; ++i) {
      b.push_back(curves[i].accs[ki]);
      g.push_back(curves[per_arm + i].accs[ki]);
    }
    AblationRow row{ks[ki], summarize(b), summarize(g), 0.0, 0.0};
    out.rows.push_back(row);
  }
  for (auto& row : out.rows) {
    row.baseline_drop = out.rows.front().baseline.mean - row.baseline.mean;
    row.gi_drop = out.rows.front().gi.mean - row.gi.mean;
  }
  return out;
}

}  // namespace gidropout::harness
