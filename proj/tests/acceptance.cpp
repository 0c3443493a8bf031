// Acceptance gate: one PASS/FAIL line per criterion. Exits non-zero when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gidropout/gidropout.hpp>

#include "oracle.hpp"

using namespace gidropout;
using namespace gidropout::harness;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;
std::vector<int> selected;  // empty: run every criterion

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  if (!selected.empty() && std::find(selected.begin(), selected.end(), id) == selected.end()) return;
  const auto t0 = Clock::now();
  Outcome out;
  try {
    out = check();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  if (!out.pass) ++failures;
  std::printf("[%s] %d %s: %s (%.2f s)\n", out.pass ? "PASS" : "FAIL", id, name.c_str(),
              out.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

std::string str(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// 1. build_table against the brute-force oracle

Outcome scoring_oracle() {
  constexpr double kTol = 1e-9;
  const auto t0 = Clock::now();
  std::vector<Dataset> corpora{load_dataset(GIDROPOUT_FIXTURES "/toy.tsv")};
  std::mt19937_64 rng(2024);
  corpora.push_back(oracle::random_corpus(50, 3, 60, rng));
  double worst = 0.0;
  std::size_t words = 0;
  for (const auto& ds : corpora) {
    for (double beta : {std::exp(-1.0), 0.95, 1e-9}) {
      const auto table = build_table(ds, ScoringConfig{1.0, beta});
      const auto ref = oracle::score_table(ds, 1.0, beta);
      if (table.size() != ref.size()) return {false, "vocabulary size mismatch"};
      for (const auto& [w, r] : ref) {
        const auto& s = table.words.at(w);
        for (std::size_t c = 0; c < r.by_class.size(); ++c)
          worst = std::max(worst, oracle::rel_err(s.by_class[c], r.by_class[c]));
        worst = std::max({worst, oracle::rel_err(s.score, r.score), oracle::rel_err(s.prob, r.prob)});
        ++words;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kTol && secs < 1.0,
          std::to_string(words) + " word checks, max rel err " + str(worst) + " (tol 1e-9), " +
              str(secs, 3) + " s (limit 1 s)"};
}

// ---------------------------------------------------------------------------
// 2. drop probability properties

Outcome drop_prob_properties() {
  const double p0 = drop_prob(0.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 30.0);
  std::size_t violations = 0;
  for (int i = 0; i < 10000; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    if (a < b && !(drop_prob(a) < drop_prob(b))) ++violations;
  }
  const double p700 = drop_prob(700.0);
  const bool ok = p0 == 0.0 && violations == 0 && std::isfinite(p700) && p700 < 1.0;
  return {ok, "p(0)=" + str(p0) + ", monotonicity violations " + std::to_string(violations) +
                  "/10000, p(700)=" + str(p700, 17)};
}

// ---------------------------------------------------------------------------
// 3. eval identity

Outcome eval_identity() {
  std::size_t mismatches = 0;
  for (auto kind : {ModelKind::cnn, ModelKind::self_attn_rnn}) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.vocab_size = 40;
    Rng init(3);
    const Model model(cfg, init);
    auto table = std::make_shared<ImportanceTable>();
    table->num_classes = 2;
    for (int w = 2; w < 40; ++w) {
      const double r = 0.2 * w;
      table->words["w" + std::to_string(w)] = WordScore{{r, 0.0}, r, drop_prob(r)};
    }
    const auto policy = DropoutPolicy::from_table(table);
    Rng data(4);
    for (int i = 0; i < 100; ++i) {
      ModelInput in;
      const std::size_t len = 1 + uniform_index(data, 20);
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t id = 2 + uniform_index(data, 38);
        in.ids.push_back(id);
        in.tokens.push_back("w" + std::to_string(id));
      }
      Rng noise(static_cast<std::uint64_t>(i));
      const auto a = model.forward(in, ForwardOptions{Phase::eval, &policy, &noise});
      const auto b = model.forward(in, ForwardOptions{Phase::eval, nullptr, nullptr});
      mismatches += a.probs != b.probs;
    }
  }
  return {mismatches == 0,
          "2 architectures x 100 inputs, " + std::to_string(mismatches) + " non-identical"};
}

// ---------------------------------------------------------------------------
// 4. gradient suite

nn::Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  nn::Tensor t = nn::Tensor::matrix(r, c);
  for (auto& x : t.values()) x = uniform(rng, -1.0, 1.0);
  return t;
}

nn::GradCheckOptions every_coordinate() {
  nn::GradCheckOptions o;
  o.max_coords_per_tensor = 10000;
  return o;
}

double model_grad_error(ModelKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.embed_dim = 8;
  cfg.vocab_size = 10;
  cfg.filter_widths = {1, 2, 3};
  cfg.filters_per_width = 4;
  cfg.lstm_hidden = 4;
  cfg.attn_dim = 6;
  cfg.attn_hops = 2;
  cfg.mlp_hidden = 8;
  Rng init(5), data(6);
  Model model(cfg, init);
  std::vector<ModelInput> batch;
  for (int i = 0; i < 3; ++i) {
    ModelInput in;
    const std::size_t len = 2 + uniform_index(data, 5);  // n <= 6
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t id = 2 + uniform_index(data, 8);
      in.ids.push_back(id);
      in.tokens.push_back("w" + std::to_string(id));
    }
    in.label = uniform_index(data, 2);
    batch.push_back(in);
  }
  const auto policy = DropoutPolicy::uniform(0.25);
  auto params = model.parameters();
  const auto rep = nn::grad_check(
      params,
      [&] {
        Rng noise(42);
        loss_and_grads(model, batch, &policy, noise);
      },
      [&] {
        Rng noise(42);
        return batch_loss(model, batch, &policy, noise);
      },
      every_coordinate());
  return rep.checked > 0 ? rep.max_rel_error : INFINITY;
}

double primitives_grad_error() {
  using namespace nn;
  Rng rng(8);
  double worst = 0.0;
  const auto track = [&](const GradCheckReport& r) {
    worst = std::max(worst, r.checked > 0 ? r.max_rel_error : INFINITY);
  };
  const auto zero = [](std::span<Parameter* const> ps) {
    for (auto* p : ps) p->zero_grad();
  };

  {  // embedding
    Parameter table("emb", random_matrix(6, 8, rng));
    const std::vector<std::size_t> ids{1, 4, 1, 5, 2, 0};
    const auto g = random_matrix(6, 8, rng);
    std::vector<Parameter*> ps{&table};
    track(grad_check(
        ps, [&] { zero(ps); embed_lookup_backward(ids, g, table); },
        [&] { return LossEval{dot(embed_lookup(ids, table).values(), g.values()), 0}; },
        every_coordinate()));
  }
  {  // dense + relu
    Dense layer("d", 8, 6, Activation::relu);
    layer.init(rng);
    Parameter x("x", random_matrix(1, 8, rng));
    const auto g = random_matrix(1, 6, rng);
    std::vector<Parameter*> ps{&layer.weight, &layer.bias, &x};
    track(grad_check(
        ps,
        [&] {
          zero(ps);
          const auto y = layer.forward(x.value.values());
          const auto gx = layer.backward(x.value.values(), y, g.values());
          std::copy(gx.begin(), gx.end(), x.grad.data());
        },
        [&] {
          const auto y = layer.forward(x.value.values());
          std::uint64_t sig = 0;
          for (double v : y) sig = sig * 2 + (v > 0.0);
          return LossEval{dot(y, g.values()), sig};
        },
        every_coordinate()));
  }
  {  // softmax cross-entropy
    Parameter z("z", random_matrix(1, 5, rng));
    std::vector<Parameter*> ps{&z};
    track(grad_check(
        ps,
        [&] {
          const auto ce = softmax_ce(z.value.values(), 3);
          std::copy(ce.grad.begin(), ce.grad.end(), z.grad.data());
        },
        [&] { return LossEval{softmax_ce(z.value.values(), 3).loss, 0}; }, every_coordinate()));
  }
  {  // convolution + relu + max-over-time
    ConvBank bank({1, 2, 3}, 4, 8);
    bank.init(rng);
    Parameter x("x", random_matrix(6, 8, rng));
    const auto g = random_matrix(1, bank.output_dim(), rng);
    std::vector<Parameter*> ps{&bank.weight(0), &bank.bias(0), &bank.weight(1),
                               &bank.bias(1),   &bank.weight(2), &bank.bias(2), &x};
    track(grad_check(
        ps,
        [&] {
          zero(ps);
          ConvCache cache;
          bank.forward(x.value, cache);
          x.grad = bank.backward(cache, g.values(), 6);
        },
        [&] {
          ConvCache cache;
          const auto out = bank.forward(x.value, cache);
          return LossEval{dot(out, g.values()), cache.signature()};
        },
        every_coordinate()));
  }
  {  // biLSTM
    BiLstm lstm(8, 4);
    lstm.init(rng);
    Parameter x("x", random_matrix(6, 8, rng));
    const auto g = random_matrix(6, 8, rng);
    std::vector<Parameter*> ps{&lstm.fwd.input_w, &lstm.fwd.hidden_w, &lstm.fwd.bias,
                               &lstm.bwd.input_w, &lstm.bwd.hidden_w, &lstm.bwd.bias, &x};
    track(grad_check(
        ps,
        [&] {
          zero(ps);
          BiLstmCache cache;
          lstm.forward(x.value, cache);
          x.grad = lstm.backward(cache, g);
        },
        [&] {
          BiLstmCache cache;
          return LossEval{dot(lstm.forward(x.value, cache).values(), g.values()), 0};
        },
        every_coordinate()));
  }
  {  // self-attention
    SelfAttention attn(8, 6, 3);
    attn.init(rng);
    Parameter h("h", random_matrix(6, 8, rng));
    const auto gm = random_matrix(3, 8, rng);
    const auto ga = random_matrix(3, 6, rng);
    std::vector<Parameter*> ps{&attn.w_s1, &attn.w_s2, &h};
    track(grad_check(
        ps,
        [&] {
          zero(ps);
          AttentionCache cache;
          const auto out = attn.forward(h.value, cache);
          h.grad = attn.backward(cache, out.annotation, gm, ga);
        },
        [&] {
          AttentionCache cache;
          const auto out = attn.forward(h.value, cache);
          return LossEval{dot(out.embedding.values(), gm.values()) +
                              dot(out.annotation.values(), ga.values()),
                          0};
        },
        every_coordinate()));
  }
  {  // penalty
    Parameter a("a", random_matrix(3, 6, rng));
    std::vector<Parameter*> ps{&a};
    track(grad_check(
        ps, [&] { a.grad = attention_penalty(a.value).grad; },
        [&] { return LossEval{attention_penalty(a.value).value, 0}; }, every_coordinate()));
  }
  return worst;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const double cnn = model_grad_error(ModelKind::cnn);
  const double rnn = model_grad_error(ModelKind::self_attn_rnn);
  const double prim = primitives_grad_error();
  const double secs = seconds_since(t0);
  return {cnn < 1e-4 && rnn < 1e-4 && prim < 1e-6 && secs < 60.0,
          "cnn " + str(cnn) + " (tol 1e-4), rnn+attention+penalty " + str(rnn) +
              " (tol 1e-4), primitives " + str(prim) + " (tol 1e-6), " + str(secs, 3) +
              " s (limit 60 s)"};
}

// ---------------------------------------------------------------------------
// 5. mask statistics

Outcome mask_statistics() {
  constexpr double kBound = 0.012;
  constexpr std::size_t kDraws = 100000;
  Rng rng(11);
  const std::vector<std::string> tokens(1000, "w");
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < kDraws / tokens.size(); ++i)
    dropped += sample_mask(tokens, DropoutPolicy::uniform(0.3), rng).dropped();
  const double uniform_rate = static_cast<double>(dropped) / kDraws;
  double worst = std::abs(uniform_rate - 0.3);

  const auto table = std::make_shared<const ImportanceTable>(
      build_table(load_dataset(GIDROPOUT_FIXTURES "/reviews.tsv"), ScoringConfig{1.0, 0.3}));
  const auto policy = DropoutPolicy::from_table(table);
  for (const auto& [word, score] : table->words) {
    const std::vector<std::string> same(1000, word);
    std::size_t d = 0;
    for (std::size_t i = 0; i < kDraws / same.size(); ++i) d += sample_mask(same, policy, rng).dropped();
    worst = std::max(worst, std::abs(static_cast<double>(d) / kDraws - score.prob));
  }
  return {worst <= kBound, "uniform p=0.3 rate " + str(uniform_rate) + "; " +
                               std::to_string(table->size()) +
                               " table words; max |rate - p| " + str(worst) + " (bound 0.012)"};
}

// ---------------------------------------------------------------------------
// 6. zipf diagnostic

Outcome zipf_exact() {
  std::vector<double> p;
  for (int i = 1; i <= 1000; ++i) p.push_back(0.5 / i);
  const auto fit = zipf_fit(p);
  return {std::abs(fit.slope + 1.0) <= 1e-6 && fit.r_squared > 0.999999,
          "slope " + str(fit.slope, 12) + " (want -1 +- 1e-6), r^2 " + str(fit.r_squared, 12)};
}

// ---------------------------------------------------------------------------
// 7. directional comparison on the synthetic corpus

// Corpus and grids for the desk-scale comparison.
struct DeskExperiment {
  SynthConfig corpus;
  std::vector<double> p_grid;
  std::vector<double> beta_grid;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

DeskExperiment desk_experiment() {
  DeskExperiment e;
  e.corpus.n_train = 2000;
  e.corpus.n_test = 500;
  e.corpus.p_strong = 0.9;
  e.corpus.p_weak = 0.7;
  e.corpus.weak_per_class = 200;
  e.p_grid = {0.1, 0.2, 0.3, 0.4, 0.5};
  e.beta_grid = {1e-6, 1e-9, 1e-12};
  return e;
}

ExperimentSpec desk_spec(const DeskExperiment& e) {
  const auto dir = std::filesystem::temp_directory_path() / "gidropout_acceptance";
  std::filesystem::create_directories(dir);
  const auto [train_ds, test_ds] = SynthCorpus(e.corpus).generate();
  save_dataset((dir / "train.tsv").string(), train_ds);
  save_dataset((dir / "test.tsv").string(), test_ds);
  ExperimentSpec spec;
  spec.train = (dir / "train.tsv").string();
  spec.test = (dir / "test.tsv").string();
  spec.dev_fraction = 0.1;
  spec.seeds = e.seeds;
  spec.p_grid = e.p_grid;
  spec.beta_grid = e.beta_grid;
  return spec;  // desk-scale CNN defaults
}

Outcome synthetic_comparison() {
  constexpr double kMargin = 0.005;     // GI - baseline, accuracy units
  constexpr double kSmallMargin = 0.005;  // Dropout-same may trail baseline by at most this
  constexpr double kTimeLimit = 600.0;
  const auto e = desk_experiment();
  auto spec = desk_spec(e);

  auto t0 = Clock::now();
  const auto cmp = compare(spec);
  const double compare_secs = seconds_since(t0);

  spec.policy = cmp.gi_dropout.policy;
  t0 = Clock::now();
  const auto abl = ablate(spec, {0, 50});
  const double ablate_secs = seconds_since(t0);

  const double base = cmp.baseline.test.mean;
  const double same = cmp.dropout_same.test.mean;
  const double gi = cmp.gi_dropout.test.mean;
  const auto& top50 = abl.rows.back();
  const bool a = gi >= same && same >= base - kSmallMargin && gi - base >= kMargin;
  const bool b = top50.k == 50 && top50.baseline_drop > top50.gi_drop;
  const bool fast = compare_secs < kTimeLimit && ablate_secs < kTimeLimit;

  std::ostringstream os;
  os.precision(4);
  os << "(a) " << (a ? "ok" : "NOT MET") << ": baseline " << base << ", dropout-same(p*="
     << cmp.dropout_same.policy.p << ") " << same << ", gi(beta*=" << cmp.gi_dropout.policy.beta
     << ") " << gi << ", gi-baseline " << (gi - base) * 100 << " pts (need >= 0.5, gi >= same >= "
     << "baseline-0.5); (b) " << (b ? "ok" : "NOT MET") << ": top-50 drop baseline "
     << top50.baseline_drop << " vs gi " << top50.gi_drop << "; time compare " << compare_secs
     << " s, ablate " << ablate_secs << " s (limit 600 s each)";
  return {a && b && fast, os.str()};
}

// ---------------------------------------------------------------------------
// 8. determinism

Outcome determinism() {
  SynthConfig sc;
  sc.n_train = 400;
  sc.n_test = 100;
  sc.weak_per_class = 30;
  const auto [train_ds, test_ds] = SynthCorpus(sc).generate();
  const auto split = holdout_split(train_ds, test_ds, 0.1, 7);
  ModelConfig model;
  model.filters_per_width = 8;
  TrainOptions opts;
  opts.max_epochs = 8;
  std::size_t identical = 0, total = 0;
  for (const auto& policy : {PolicySpec::off(), PolicySpec::uniform(0.3), PolicySpec::table(1e-9)}) {
    for (auto kind : {ModelKind::cnn, ModelKind::self_attn_rnn}) {
      model.kind = kind;
      const auto run = [&] {
        return json(train(TrainInputs{split, 0, model, policy, opts, 17, ""}).report).dump();
      };
      identical += run() == run();
      ++total;
    }
  }
  return {identical == total,
          std::to_string(identical) + "/" + std::to_string(total) +
              " repeated train runs byte-identical (3 policies x 2 architectures)"};
}

// ---------------------------------------------------------------------------
// 9. leak guard

Outcome leak_guard() {
  // The test split contains "twist" only in the negative class, so counting
  // test tokens gives it a positive score that the training split does not.
  const auto dir = std::filesystem::temp_directory_path() / "gidropout_acceptance";
  std::filesystem::create_directories(dir);
  {
    std::ofstream train(dir / "leak_train.tsv");
    train << "pos\tfine fine story twist\npos\tfine acting\npos\tfine fine plot\n"
             "neg\tdull dull story\nneg\tdull plot twist\nneg\tdull acting\n"
             "pos\tfine movie\nneg\tdull movie\n";
    std::ofstream test(dir / "leak_test.tsv");
    test << "neg\ttwist twist twist dull\nneg\ttwist ending\npos\tfine twist\n";
  }
  ExperimentSpec spec;
  spec.train = (dir / "leak_train.tsv").string();
  spec.test = (dir / "leak_test.tsv").string();
  spec.dev_fraction = 0.25;
  spec.model.embed_dim = 4;
  spec.model.filters_per_width = 2;
  spec.training.max_epochs = 2;
  spec.policy = PolicySpec::table(0.5);
  const auto split = prepare_folds(spec).front();

  Dataset leaked = split.train;
  leaked.examples.insert(leaked.examples.end(), split.test.examples.begin(), split.test.examples.end());
  const ScoringConfig sc{spec.policy.alpha, spec.policy.beta};
  const auto honest = build_table(split.train, sc);
  const auto dishonest = build_table(leaked, sc);
  const bool differ = !(honest == dishonest) && honest.fingerprint() != dishonest.fingerprint();

  const auto run = train(TrainInputs{split, 0, spec.model, spec.policy, spec.training, 1, ""});
  const bool uses_train_only = run.report.table_fingerprint &&
                               *run.report.table_fingerprint == honest.fingerprint() &&
                               *run.table == honest;
  return {differ && uses_train_only,
          std::string("train+test table ") + (differ ? "differs" : "DOES NOT differ") +
              " from train-only (twist prob " + str(honest.prob("twist")) + " vs " +
              str(dishonest.prob("twist")) + "); harness table fingerprint " +
              (run.report.table_fingerprint ? hex64(*run.report.table_fingerprint) : "none") +
              (uses_train_only ? " == train-only" : " != train-only")};
}

}  // namespace

// Optional arguments restrict the run to the listed criterion numbers.
int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  report(1, "scoring oracle equivalence", scoring_oracle);
  report(2, "drop probability properties", drop_prob_properties);
  report(3, "eval identity", eval_identity);
  report(4, "gradient suite", gradient_suite);
  report(5, "mask statistics", mask_statistics);
  report(6, "zipf diagnostic", zipf_exact);
  report(7, "synthetic comparison", synthetic_comparison);
  report(8, "determinism", determinism);
  report(9, "leak guard", leak_guard);
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
