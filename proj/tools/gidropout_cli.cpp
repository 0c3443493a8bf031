// Command-line front end. Exit codes: 0 success, 1 data or I/O error,
// 2 invalid configuration or arguments, 3 training divergence.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <gidropout/gidropout.hpp>

namespace fs = std::filesystem;
using namespace gidropout;
using namespace gidropout::harness;

namespace gidropout {

inline void from_json(const json& j, SynthConfig& c) {
  read_opt(j, "n_train", c.n_train);
  read_opt(j, "n_test", c.n_test);
  read_opt(j, "num_classes", c.num_classes);
  read_opt(j, "strong_per_class", c.strong_per_class);
  read_opt(j, "weak_per_class", c.weak_per_class);
  read_opt(j, "background_vocab", c.background_vocab);
  read_opt(j, "zipf_exponent", c.zipf_exponent);
  read_opt(j, "min_background", c.min_background);
  read_opt(j, "max_background", c.max_background);
  read_opt(j, "p_strong", c.p_strong);
  read_opt(j, "p_weak", c.p_weak);
  read_opt(j, "strong_confusion", c.strong_confusion);
  read_opt(j, "seed", c.seed);
}

}  // namespace gidropout

namespace {

struct Common {
  std::string data;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

struct Scoring {
  double alpha = 1.0;
  double beta = 0.95;
  bool lowercase = true;
};

// Writes `<out>/<stem>.json` and `<out>/<stem>.tsv` when --out is given; the
// TSV always goes to stdout.
void emit(const Common& c, const std::string& stem, const json& j, const std::string& tsv) {
  std::cout << tsv;
  if (c.out.empty()) return;
  fs::create_directories(c.out);
  std::ofstream(fs::path(c.out) / (stem + ".json")) << j.dump(2) << '\n';
  std::ofstream(fs::path(c.out) / (stem + ".tsv")) << tsv;
}

Dataset require_data(const Common& c, const Scoring& s) {
  if (c.data.empty()) throw ConfigError("--data is required");
  LoadOptions opts;
  opts.lowercase = s.lowercase;
  return load_dataset(c.data, opts);
}

ExperimentSpec require_spec(const Common& c) {
  ExperimentSpec spec;
  if (!c.config.empty()) spec = load_spec(c.config);
  if (!c.data.empty()) {
    if (spec.folds >= 2 || spec.train.empty()) spec.data = c.data;
    else spec.train = c.data;
  }
  if (c.seed_set) spec.seeds = {c.seed};
  spec.validate();
  return spec;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string policy_label(const PolicySpec& p) {
  switch (p.mode) {
    case DropoutMode::off: return "off";
    case DropoutMode::uniform: return "uniform p=" + fmt(p.p, 3);
    case DropoutMode::table: {
      std::ostringstream os;
      os << "table beta=" << p.beta;
      return os.str();
    }
  }
  return "off";
}

// ---------------------------------------------------------------------------

int cmd_score(const Common& c, const Scoring& s) {
  const auto ds = require_data(c, s);
  const auto table = build_table(ds, ScoringConfig{s.alpha, s.beta});
  std::ostringstream tsv;
  write_score_tsv(tsv, table, ds.label_names);
  json j = json::array();
  for (const auto& w : table.ranked_words()) {
    const auto& ws = table.words.at(w);
    j.push_back({{"word", w}, {"by_class", ws.by_class}, {"score", ws.score}, {"prob", ws.prob}});
  }
  emit(c, "scores",
       {{"alpha", s.alpha}, {"beta", s.beta}, {"label_names", ds.label_names}, {"words", j}},
       tsv.str());
  return 0;
}

int cmd_keywords(const Common& c, const Scoring& s, std::size_t k) {
  const auto ds = require_data(c, s);
  const auto table = build_table(ds, ScoringConfig{s.alpha, s.beta});
  std::ostringstream tsv;
  tsv << "class\trank\tword\tscore\n" << std::setprecision(17);
  json j = json::object();
  for (std::size_t cls = 0; cls < ds.num_classes(); ++cls) {
    const auto words = top_keywords(table, cls, k);
    for (std::size_t i = 0; i < words.size(); ++i)
      tsv << ds.label_names[cls] << '\t' << i + 1 << '\t' << words[i] << '\t'
          << table.words.at(words[i]).by_class[cls] << '\n';
    j[ds.label_names[cls]] = words;
  }
  emit(c, "keywords", j, tsv.str());
  return 0;
}

int cmd_zipf(const Common& c, const Scoring& s) {
  const auto ds = require_data(c, s);
  const auto fit = zipf_diagnostic(build_table(ds, ScoringConfig{s.alpha, s.beta}));
  std::ostringstream tsv;
  tsv << std::setprecision(17) << "beta\tslope\tr_squared\tsupport\n"
      << s.beta << '\t' << fit.slope << '\t' << fit.r_squared << '\t' << fit.support << '\n';
  emit(c, "zipf",
       {{"beta", s.beta}, {"slope", fit.slope}, {"r_squared", fit.r_squared}, {"support", fit.support}},
       tsv.str());
  return 0;
}

int cmd_train(const Common& c, std::size_t fold) {
  const auto spec = require_spec(c);
  const auto folds = prepare_folds(spec);
  if (fold >= folds.size())
    throw ConfigError("--fold " + std::to_string(fold) + " out of range (" +
                      std::to_string(folds.size()) + " folds)");
  auto result = train(TrainInputs{folds[fold], fold, spec.model, spec.policy, spec.training,
                                  spec.seeds.front(), spec.embeddings});
  const auto& r = result.report;
  std::ostringstream tsv;
  tsv << "epoch\ttrain_loss\tdev_accuracy\n";
  for (const auto& e : r.epochs)
    tsv << e.epoch << '\t' << fmt(e.train_loss, 6) << '\t' << fmt(e.dev_accuracy) << '\n';
  tsv << "# best epoch " << r.best_epoch << ", dev " << fmt(r.best_dev_accuracy) << ", test "
      << fmt(r.test_accuracy) << '\n';
  emit(c, "report", r, tsv.str());
  if (!c.out.empty()) {
    std::ofstream ck(fs::path(c.out) / "model.ckpt", std::ios::binary);
    save_checkpoint(ck, *result.model, result.vocab, folds[fold].train.label_names,
                    json{{"seed", r.seed}, {"fold", fold}, {"policy", r.policy}});
  }
  return 0;
}

int cmd_eval(const Common& c, const Scoring& s, const std::string& checkpoint) {
  std::ifstream in(checkpoint, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + checkpoint);
  const auto ck = read_checkpoint(in);
  Rng unused(0);
  Model model(ck.config, unused);
  load_parameters(model, ck);
  const auto vocab = vocabulary_from_words(ck.vocabulary);
  if (c.data.empty()) throw ConfigError("--data is required");
  LoadOptions opts;
  opts.lowercase = s.lowercase;
  opts.label_names = ck.label_names;
  const auto ds = load_dataset(c.data, opts);
  const double acc = accuracy(model, encode_all(ds, vocab));
  std::ostringstream tsv;
  tsv << "examples\taccuracy\n" << ds.size() << '\t' << fmt(acc, 6) << '\n';
  emit(c, "eval", {{"examples", ds.size()}, {"accuracy", acc}}, tsv.str());
  return 0;
}

void arm_row(std::ostringstream& tsv, const ArmResult& a) {
  tsv << a.arm << '\t' << policy_label(a.policy) << '\t' << fmt(a.dev.mean) << '\t'
      << fmt(a.test.mean) << '\t' << fmt(a.test.stddev) << '\t' << a.test.n << '\n';
}

int cmd_compare(const Common& c) {
  const auto result = compare(require_spec(c));
  std::ostringstream tsv;
  tsv << "arm\tpolicy\tdev_mean\ttest_mean\ttest_std\truns\n";
  arm_row(tsv, result.baseline);
  arm_row(tsv, result.dropout_same);
  arm_row(tsv, result.gi_dropout);
  tsv << "# grid\n";
  for (const auto& a : result.p_grid) arm_row(tsv, a);
  for (const auto& a : result.beta_grid) arm_row(tsv, a);
  emit(c, "compare", result, tsv.str());
  return 0;
}

int cmd_sweep(const Common& c) {
  const auto rows = sweep_beta(require_spec(c));
  std::ostringstream tsv;
  tsv << "beta\tdev_mean\ttest_mean\ttest_std\tzipf_slope\tzipf_r2\n";
  for (const auto& r : rows) {
    tsv << r.beta << '\t' << fmt(r.dev.mean) << '\t' << fmt(r.test.mean) << '\t'
        << fmt(r.test.stddev) << '\t';
    if (r.zipf) tsv << fmt(r.zipf->slope) << '\t' << fmt(r.zipf->r_squared) << '\n';
    else tsv << "NA\tNA\n";
  }
  emit(c, "sweep_beta", rows, tsv.str());
  return 0;
}

int cmd_ablate(const Common& c, std::vector<std::int64_t> ks) {
  const auto spec = require_spec(c);
  if (ks.empty()) ks = spec.ablation_k;
  const auto result = ablate(spec, ks);
  std::ostringstream tsv;
  tsv << "k\tbaseline_mean\tgi_mean\tbaseline_drop\tgi_drop\n";
  for (const auto& r : result.rows)
    tsv << r.k << '\t' << fmt(r.baseline.mean) << '\t' << fmt(r.gi.mean) << '\t'
        << fmt(r.baseline_drop) << '\t' << fmt(r.gi_drop) << '\n';
  emit(c, "ablation", result, tsv.str());
  return 0;
}

int cmd_synth(const Common& c, std::size_t n_train, std::size_t n_test) {
  if (c.out.empty()) throw ConfigError("synth needs --out DIR");
  SynthConfig sc;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw ConfigError("cannot open config file: " + c.config);
    try {
      sc = json::parse(in).get<SynthConfig>();
    } catch (const json::exception& e) {
      throw ConfigError("config " + c.config + ": " + e.what());
    }
  }
  if (n_train) sc.n_train = n_train;
  if (n_test) sc.n_test = n_test;
  if (c.seed_set) sc.seed = c.seed;
  const auto [train, test] = SynthCorpus(sc).generate();
  fs::create_directories(c.out);
  save_dataset((fs::path(c.out) / "train.tsv").string(), train);
  save_dataset((fs::path(c.out) / "test.tsv").string(), test);
  std::cout << "wrote " << train.size() << " train and " << test.size() << " test examples to "
            << c.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Importance-guided word dropout for text classifiers"};
  app.require_subcommand(1);
  Common common;
  Scoring scoring;
  std::size_t k = 10, fold = 0, n_train = 0, n_test = 0;
  std::string checkpoint;
  std::vector<std::int64_t> ks;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--data", common.data, "Dataset TSV (label<TAB>text)");
    sub->add_option("--config", common.config, "JSON config file");
    sub->add_option("--seed", common.seed, "Random seed (overrides the config)")
        ->each([&](const std::string&) { common.seed_set = true; });
    sub->add_option("--out", common.out, "Output directory");
  };
  const auto add_scoring = [&](CLI::App* sub) {
    sub->add_option("--alpha", scoring.alpha, "Smoothing constant")->capture_default_str();
    sub->add_option("--beta", scoring.beta, "Frequency base, in (0, 1)")->capture_default_str();
    sub->add_flag("!--keep-case", scoring.lowercase, "Do not lowercase tokens");
  };

  auto* score = app.add_subcommand("score", "Write the word importance table");
  auto* keywords = app.add_subcommand("keywords", "Top-k keywords per class");
  auto* zipf = app.add_subcommand("zipf", "Fit log(p) against log(rank)");
  auto* train_cmd = app.add_subcommand("train", "Train one model with early stopping");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  auto* cmp = app.add_subcommand("compare", "Baseline vs uniform dropout vs GI-Dropout");
  auto* sweep = app.add_subcommand("sweep-beta", "Accuracy and Zipf fit per beta");
  auto* abl = app.add_subcommand("ablate", "Accuracy after removing the top-k words");
  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus");
  for (auto* sub : {score, keywords, zipf, train_cmd, eval, cmp, sweep, abl, synth}) add_common(sub);
  for (auto* sub : {score, keywords, zipf, eval}) add_scoring(sub);
  keywords->add_option("--k", k, "Keywords per class")->capture_default_str();
  train_cmd->add_option("--fold", fold, "Fold index")->capture_default_str();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
  abl->add_option("--k", ks, "Values of k (default: the config's ablation_k)")->delimiter(',');
  synth->add_option("--n-train", n_train, "Training examples");
  synth->add_option("--n-test", n_test, "Test examples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*score) return cmd_score(common, scoring);
    if (*keywords) return cmd_keywords(common, scoring, k);
    if (*zipf) return cmd_zipf(common, scoring);
    if (*train_cmd) return cmd_train(common, fold);
    if (*eval) return cmd_eval(common, scoring, checkpoint);
    if (*cmp) return cmd_compare(common);
    if (*sweep) return cmd_sweep(common);
    if (*abl) return cmd_ablate(common, ks);
    if (*synth) return cmd_synth(common, n_train, n_test);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
