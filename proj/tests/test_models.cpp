#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numeric>

#include "gidropout/models.hpp"

using namespace gidropout;

namespace {

ModelConfig small_config(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.embed_dim = 6;
  c.vocab_size = 12;
  c.num_classes = 2;
  c.filter_widths = {1, 2, 3};
  c.filters_per_width = 4;
  c.lstm_hidden = 3;
  c.attn_dim = 4;
  c.attn_hops = 2;
  c.mlp_hidden = 5;
  return c;
}

ModelInput random_input(Rng& rng, std::size_t vocab, std::size_t max_len, std::size_t classes) {
  ModelInput in;
  const std::size_t len = 1 + uniform_index(rng, max_len);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t id = 1 + uniform_index(rng, vocab - 1);
    in.ids.push_back(id);
    in.tokens.push_back("w" + std::to_string(id));
  }
  in.label = uniform_index(rng, classes);
  return in;
}

std::shared_ptr<const ImportanceTable> table_over_ids(std::size_t vocab) {
  auto t = std::make_shared<ImportanceTable>();
  t->num_classes = 2;
  for (std::size_t id = 1; id < vocab; ++id) {
    WordScore s;
    s.by_class = {0.3 * id, 0.0};
    s.score = 0.3 * id;
    s.prob = drop_prob(s.score);
    t->words.emplace("w" + std::to_string(id), s);
  }
  return t;
}

class BothKinds : public ::testing::TestWithParam<ModelKind> {};

}  // namespace

INSTANTIATE_TEST_SUITE_P(Models, BothKinds,
                         ::testing::Values(ModelKind::cnn, ModelKind::self_attn_rnn),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST_P(BothKinds, EvalIdentityWithAndWithoutGiLayer) {
  const auto cfg = small_config(GetParam());
  Rng init(1), data(2);
  const Model model(cfg, init);
  const auto policy = DropoutPolicy::from_table(table_over_ids(cfg.vocab_size));
  for (int i = 0; i < 100; ++i) {
    const auto in = random_input(data, cfg.vocab_size, 6, 2);
    Rng noise(static_cast<std::uint64_t>(i));
    const auto with = model.forward(in, ForwardOptions{Phase::eval, &policy, &noise});
    const auto without = model.forward(in, ForwardOptions{Phase::eval, nullptr, nullptr});
    ASSERT_EQ(with.probs, without.probs);
    ASSERT_EQ(with.label, without.label);
  }
}

TEST_P(BothKinds, TrainPhaseWithoutNoiseEqualsEval) {
  auto cfg = small_config(GetParam());
  cfg.mlp_dropout = 0.0;
  Rng init(3), data(4), noise(5);
  const Model model(cfg, init);
  const auto off = DropoutPolicy::off();
  for (int i = 0; i < 20; ++i) {
    const auto in = random_input(data, cfg.vocab_size, 6, 2);
    EXPECT_EQ(model.forward(in, ForwardOptions{Phase::train, &off, &noise}).probs,
              model.predict(in).probs);
  }
}

TEST_P(BothKinds, PredictionsLieOnSimplex) {
  const auto cfg = small_config(GetParam());
  Rng init(6), data(7);
  const Model model(cfg, init);
  for (int i = 0; i < 30; ++i) {
    const auto p = model.predict(random_input(data, cfg.vocab_size, 6, 2)).probs;
    double sum = 0.0;
    for (double x : p) {
      EXPECT_GE(x, 0.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST_P(BothKinds, EmptyInputIsAllowed) {
  const auto cfg = small_config(GetParam());
  Rng init(8), noise(9);
  Model model(cfg, init);
  const ModelInput empty{{}, {}, 1};
  EXPECT_NEAR(model.predict(empty).probs[0] + model.predict(empty).probs[1], 1.0, 1e-12);
  const auto policy = DropoutPolicy::uniform(0.5);
  const std::vector<ModelInput> batch{empty};
  EXPECT_TRUE(std::isfinite(loss_and_grads(model, batch, &policy, noise)));
}

TEST_P(BothKinds, InitialLossNearChance) {
  ModelConfig cfg;  // desk-scale defaults
  cfg.kind = GetParam();
  cfg.penalty_coef = 0.0;  // cross-entropy only
  cfg.vocab_size = 200;
  Rng data(10);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng init(seed);
    const Model model(cfg, init);
    const std::vector<ModelInput> one{random_input(data, cfg.vocab_size, 12, 2)};
    Rng noise(0);
    const double loss = batch_loss(model, one, nullptr, noise, Phase::eval).loss;
    EXPECT_NEAR(loss, std::log(2.0), 0.2) << "seed " << seed;
  }
}

TEST_P(BothKinds, EndToEndGradientCheck) {
  const auto cfg = small_config(GetParam());
  Rng init(11), data(12);
  Model model(cfg, init);
  std::vector<ModelInput> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(random_input(data, cfg.vocab_size, 6, 2));
  const auto policy = DropoutPolicy::uniform(0.3);
  auto params = model.parameters();
  nn::GradCheckOptions opts;
  opts.max_coords_per_tensor = 40;
  const auto rep = nn::grad_check(
      params,
      [&] {
        Rng noise(99);
        loss_and_grads(model, batch, &policy, noise);
      },
      [&] {
        Rng noise(99);
        return batch_loss(model, batch, &policy, noise);
      },
      opts);
  EXPECT_TRUE(rep.passed(1e-4)) << rep.max_rel_error << " at " << rep.worst << " skipped "
                                << rep.skipped;
  EXPECT_GT(rep.checked, 100u);
}

TEST_P(BothKinds, DuplicatingBatchKeepsMeanLoss) {
  const auto cfg = small_config(GetParam());
  Rng init(13), data(14), noise(0);
  const Model model(cfg, init);
  std::vector<ModelInput> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_input(data, cfg.vocab_size, 6, 2));
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  EXPECT_NEAR(batch_loss(model, batch, nullptr, noise, Phase::eval).loss,
              batch_loss(model, doubled, nullptr, noise, Phase::eval).loss, 1e-12);
}

TEST_P(BothKinds, DroppedTokensGetNoEmbeddingGradient) {
  auto cfg = small_config(GetParam());
  cfg.mlp_dropout = 0.0;
  Rng init(15);
  Model model(cfg, init);
  // w3 is always dropped (p just below 1), w4 never
  auto table = std::make_shared<ImportanceTable>();
  table->num_classes = 2;
  table->words["w3"] = WordScore{{50.0, 0.0}, 50.0, drop_prob(50.0)};
  const auto policy = DropoutPolicy::from_table(table);
  const std::vector<ModelInput> batch{{{3, 4, 3}, {"w3", "w4", "w3"}, 0}};
  Rng noise(1);
  loss_and_grads(model, batch, &policy, noise);
  double g3 = 0.0, g4 = 0.0;
  for (double g : model.embedding().grad.row(3)) g3 += std::abs(g);
  for (double g : model.embedding().grad.row(4)) g4 += std::abs(g);
  EXPECT_EQ(g3, 0.0);
  EXPECT_GT(g4, 0.0);
}

TEST(Cnn, HandComputedFourTokens) {
  ModelConfig cfg;
  cfg.kind = ModelKind::cnn;
  cfg.embed_dim = 2;
  cfg.vocab_size = 5;
  cfg.filter_widths = {2};
  cfg.filters_per_width = 1;
  Rng init(0);
  Model model(cfg, init);
  auto ps = model.parameters();
  ASSERT_EQ(ps.size(), 5u);
  auto& emb = ps[0]->value;
  emb.fill(0.0);
  emb(2, 0) = 1.0;  // a = [1, 0]
  emb(3, 1) = 1.0;  // b = [0, 1]
  emb(4, 0) = 1.0;  // c = [1, 1]
  emb(4, 1) = 1.0;
  const double w[] = {0.5, -0.2, 0.3, 0.4};
  std::copy(std::begin(w), std::end(w), ps[1]->value.data());
  ps[2]->value[0] = 0.05;
  ps[3]->value(0, 0) = 1.0;
  ps[3]->value(1, 0) = -0.5;
  ps[4]->value[0] = 0.1;
  ps[4]->value[1] = 0.2;

  // windows over "a b c a": 0.95, 0.55, 0.65 -> pooled 0.95
  // logits [0.95 + 0.1, -0.475 + 0.2] = [1.05, -0.275]
  const ModelInput in{{2, 3, 4, 2}, {"a", "b", "c", "a"}, 0};
  const auto pred = model.predict(in);
  const double p0 = 1.0 / (1.0 + std::exp(-1.325));
  EXPECT_NEAR(pred.probs[0], p0, 1e-9);
  EXPECT_NEAR(pred.probs[1], 1.0 - p0, 1e-9);
  EXPECT_EQ(pred.label, 0u);
}

TEST(Rnn, PenaltyEntersLoss) {
  auto cfg = small_config(ModelKind::self_attn_rnn);
  Rng init(16), data(17), noise(0);
  const Model model(cfg, init);
  auto zero = cfg;
  zero.penalty_coef = 0.0;
  Rng init2(16);
  const Model plain(zero, init2);
  const std::vector<ModelInput> one{random_input(data, cfg.vocab_size, 6, 2)};
  ForwardTrace tr;
  model.forward(one[0], ForwardOptions{}, &tr);
  EXPECT_NEAR(batch_loss(model, one, nullptr, noise, Phase::eval).loss -
                  batch_loss(plain, one, nullptr, noise, Phase::eval).loss,
              tr.penalty, 1e-12);
  EXPECT_GT(tr.penalty, 0.0);
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  c.vocab_size = 10;
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.filter_widths = {3, 2};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.mlp_dropout = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.vocab_size = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(parse_model_kind("mlp"), ConfigError);
}
