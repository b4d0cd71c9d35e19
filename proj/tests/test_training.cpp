#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "clora/backbone.hpp"
#include "clora/ops.hpp"
#include "clora/train.hpp"
#include "test_support.hpp"

namespace clora::train {
namespace {

using clora::testing::bitwise_equal;
using clora::testing::random_matrix;
using clora::testing::random_samples;
using clora::testing::small_config;

TEST(CdLoss, ZeroForPerfectPredictions) {
  const auto cfg = small_config(3, MixingMode::mlp, true);
  const auto params = init_params(cfg, 1);
  std::mt19937_64 rng(51);
  auto batch = random_samples(rng, 4, cfg.lookback, cfg.horizon, 3);
  for (auto& s : batch) s.y = forward(s.x, params);
  EXPECT_EQ(cd_loss(batch, params), 0.0);
}

TEST(CdLoss, ZeroPredictorAgainstOnesIsOne) {
  const auto cfg = small_config(2, MixingMode::none, false);
  const auto params = ParamSet::zeros(cfg);
  Matrix x(cfg.lookback, 2);
  for (std::size_t t = 0; t < cfg.lookback; ++t) x(t, 0) = x(t, 1) = (t % 2 == 0) ? 1.0 : -1.0;
  const std::vector<data::WindowSample> batch{{x, Matrix(cfg.horizon, 2, 1.0), 0}};
  EXPECT_EQ(cd_loss(batch, params), 1.0);
}

TEST(CdLoss, MatchesElementLoop) {
  const auto cfg = small_config(4, MixingMode::attention, true);
  const auto params = init_params(cfg, 2);
  std::mt19937_64 rng(52);
  const auto batch = random_samples(rng, 5, cfg.lookback, cfg.horizon, 4);
  double total = 0.0;
  for (const auto& s : batch) {
    const Matrix p = forward(s.x, params);
    for (std::size_t h = 0; h < cfg.horizon; ++h)
      for (std::size_t c = 0; c < 4; ++c) total += (s.y(h, c) - p(h, c)) * (s.y(h, c) - p(h, c));
  }
  EXPECT_NEAR(cd_loss(batch, params), total / (5.0 * cfg.horizon * 4), 1e-12);
  EXPECT_THROW(cd_loss({}, params), std::invalid_argument);
}

TEST(CiLoss, ZeroForPerfectPerChannelPredictors) {
  const auto cfg = small_config(3, MixingMode::none, true, EmbeddingMode::per_channel);
  const auto params = init_params(cfg, 3);
  std::mt19937_64 rng(53);
  auto batch = random_samples(rng, 3, cfg.lookback, cfg.horizon, 3);
  for (auto& s : batch)
    for (std::size_t c = 0; c < 3; ++c) {
      const Matrix p = forecast_channel(s.x, c, params);
      for (std::size_t h = 0; h < cfg.horizon; ++h) s.y(h, c) = p(h, 0);
    }
  EXPECT_EQ(ci_loss(batch, params), 0.0);
}

TEST(CiLoss, AveragesOverChannels) {
  const auto cfg = small_config(2, MixingMode::none, false, EmbeddingMode::per_channel);
  const auto params = init_params(cfg, 4);
  std::mt19937_64 rng(54);
  auto batch = random_samples(rng, 2, cfg.lookback, cfg.horizon, 2);
  for (auto& s : batch) {
    const Matrix p0 = forecast_channel(s.x, 0, params);
    const Matrix p1 = forecast_channel(s.x, 1, params);
    for (std::size_t h = 0; h < cfg.horizon; ++h) {
      s.y(h, 0) = p0(h, 0);
      s.y(h, 1) = p1(h, 0) + 1.0;
    }
  }
  EXPECT_NEAR(ci_loss(batch, params), 0.5, 1e-12);
}

TEST(CiLoss, TiedParametersCollapseToSharedCdLoss) {
  for (bool adapter : {false, true}) {
    auto shared_cfg = small_config(4, MixingMode::none, adapter);
    auto individual_cfg = shared_cfg;
    individual_cfg.embedding = EmbeddingMode::per_channel;
    const auto shared = init_params(shared_cfg, 5);
    auto individual = init_params(individual_cfg, 6);
    for (auto& e : individual.embed) e = shared.embed[0];
    individual.proj_weight = shared.proj_weight;
    individual.proj_bias = shared.proj_bias;
    individual.adapters = shared.adapters;
    std::mt19937_64 rng(55);
    const auto batch = random_samples(rng, 6, shared_cfg.lookback, shared_cfg.horizon, 4);
    EXPECT_NEAR(ci_loss(batch, individual), cd_loss(batch, shared), 1e-12);
  }
}

TEST(CiLoss, RejectsSharedEmbeddingAndMixing) {
  std::mt19937_64 rng(56);
  const auto batch = random_samples(rng, 1, 24, 8, 3);
  EXPECT_THROW(ci_loss(batch, init_params(small_config(3, MixingMode::none, false), 1)), std::invalid_argument);
  EXPECT_THROW(ci_loss(batch, init_params(small_config(3, MixingMode::mlp, false, EmbeddingMode::per_channel), 1)),
               std::invalid_argument);
}

TEST(Fit, ZeroLearningRateLeavesParamsUnchanged) {
  const auto cfg = small_config(3, MixingMode::mlp, true);
  std::mt19937_64 rng(57);
  const auto train_set = random_samples(rng, 10, cfg.lookback, cfg.horizon, 3);
  const auto val_set = random_samples(rng, 4, cfg.lookback, cfg.horizon, 3);
  TrainConfig tc;
  tc.epochs = 1;
  tc.learning_rate = 0.0;
  tc.seed = 9;
  const auto result = fit(train_set, val_set, cfg, tc);
  EXPECT_TRUE(bitwise_equal(result.params, init_params(cfg, 9)));
  EXPECT_EQ(result.record.epochs.size(), 1u);
  EXPECT_EQ(result.record.total_params, total_param_count(cfg));
}

TEST(Fit, LearnsRealizableLinearMap) {
  // Targets are a row-stochastic linear map of the window, which survives
  // per-window normalization; mixing is off.
  auto cfg = small_config(2, MixingMode::none, false);
  cfg.lookback = 8;
  cfg.horizon = 3;
  cfg.embed_dim = 32;
  std::mt19937_64 rng(58);
  Matrix a(cfg.horizon, cfg.lookback);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t h = 0; h < cfg.horizon; ++h) {
    double s = 0.0;
    for (std::size_t t = 0; t < cfg.lookback; ++t) s += (a(h, t) = u(rng));
    for (std::size_t t = 0; t < cfg.lookback; ++t) a(h, t) /= s;
  }
  auto make = [&](std::size_t n) {
    auto samples = random_samples(rng, n, cfg.lookback, cfg.horizon, 2);
    for (auto& s : samples) s.y = matmul(a, s.x);
    return samples;
  };
  const auto train_set = make(256);
  const auto val_set = make(64);
  TrainConfig tc;
  tc.epochs = 200;
  tc.learning_rate = 3e-3;
  tc.batch_size = 16;
  tc.patience = 200;
  const auto result = fit(train_set, val_set, cfg, tc);
  EXPECT_LT(cd_loss(train_set, result.params), 1e-3);
}

TEST(Fit, SameSeedIsBitwiseReproducible) {
  const auto cfg = small_config(3, MixingMode::attention, true);
  std::mt19937_64 rng(59);
  const auto train_set = random_samples(rng, 20, cfg.lookback, cfg.horizon, 3);
  const auto val_set = random_samples(rng, 5, cfg.lookback, cfg.horizon, 3);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.seed = 11;
  const auto a = fit(train_set, val_set, cfg, tc);
  const auto b = fit(train_set, val_set, cfg, tc);
  EXPECT_TRUE(bitwise_equal(a.params, b.params));
  ASSERT_EQ(a.record.epochs.size(), b.record.epochs.size());
  for (std::size_t i = 0; i < a.record.epochs.size(); ++i) {
    EXPECT_EQ(a.record.epochs[i].train_mse, b.record.epochs[i].train_mse);
    EXPECT_EQ(a.record.epochs[i].val_mse, b.record.epochs[i].val_mse);
  }
}

TEST(Fit, RecordIsOrderedJsonLines) {
  const auto cfg = small_config(2, MixingMode::none, true);
  std::mt19937_64 rng(60);
  const auto train_set = random_samples(rng, 8, cfg.lookback, cfg.horizon, 2);
  TrainConfig tc;
  tc.epochs = 3;
  const auto result = fit(train_set, train_set, cfg, tc);
  std::istringstream lines(result.record.to_jsonl());
  std::string line;
  std::size_t expected = 1;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch").get<std::size_t>(), expected++);
    EXPECT_TRUE(std::isfinite(j.at("train_mse").get<double>()));
    EXPECT_TRUE(j.contains("val_mse"));
    EXPECT_TRUE(j.contains("seconds"));
  }
  EXPECT_EQ(expected, result.record.epochs.size() + 1);
}

TEST(Fit, EarlyStopHonorsPatience) {
  const auto cfg = small_config(2, MixingMode::none, false);
  std::mt19937_64 rng(61);
  const auto train_set = random_samples(rng, 8, cfg.lookback, cfg.horizon, 2);
  TrainConfig tc;
  tc.epochs = 50;
  tc.learning_rate = 0.0;  // validation never improves
  tc.patience = 3;
  EXPECT_EQ(fit(train_set, train_set, cfg, tc).record.epochs.size(), 3u);
}

TEST(Fit, DivergenceNamesEpochAndBatch) {
  const auto cfg = small_config(2, MixingMode::mlp, false);
  std::mt19937_64 rng(62);
  const auto train_set = random_samples(rng, 8, cfg.lookback, cfg.horizon, 2);
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 2;
  tc.learning_rate = 1e300;
  try {
    fit(train_set, train_set, cfg, tc);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.epoch(), 1u);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}

TEST(Fit, RejectsInvalidConfig) {
  const auto cfg = small_config(2, MixingMode::none, false);
  std::mt19937_64 rng(63);
  const auto s = random_samples(rng, 4, cfg.lookback, cfg.horizon, 2);
  TrainConfig tc;
  tc.epochs = 0;
  EXPECT_THROW(fit(s, s, cfg, tc), std::invalid_argument);
  tc = {};
  tc.batch_size = 0;
  EXPECT_THROW(fit(s, s, cfg, tc), std::invalid_argument);
  tc = {};
  tc.learning_rate = -1.0;
  EXPECT_THROW(fit(s, s, cfg, tc), std::invalid_argument);
}

TEST(Adam, TinyStepDoesNotIncreaseLoss) {
  for (MixingMode m : {MixingMode::none, MixingMode::mlp, MixingMode::attention}) {
    const auto cfg = small_config(3, m, true);
    std::mt19937_64 rng(64);
    const auto batch = random_samples(rng, 4, cfg.lookback, cfg.horizon, 3);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      ParamSet params = init_params(cfg, seed);
      const auto lg = loss_and_gradient(batch, params);
      std::vector<const Matrix*> grads;
      lg.gradient.for_each([&](const std::string&, const Matrix& g, ParamGroup) { grads.push_back(&g); });
      std::size_t k = 0;
      params.for_each([&](const std::string&, Matrix& p, ParamGroup) {
        AdamOptions opts;
        opts.lr = 1e-8;
        AdamState state = AdamState::like(p, opts);
        adam_step(p, *grads[k++], state);
      });
      EXPECT_LE(cd_loss(batch, params), lg.loss + 1e-12) << to_string(m) << " seed " << seed;
    }
  }
}

TEST(Freeze, BackboneIsNeverMoved) {
  const auto cfg = small_config(3, MixingMode::mlp, true);
  std::mt19937_64 rng(65);
  const auto train_set = random_samples(rng, 12, cfg.lookback, cfg.horizon, 3);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.freeze_backbone = true;
  tc.patience = 10;
  tc.learning_rate = 1e-2;
  const ParamSet start = init_params(cfg, 12);
  const auto result = train_from(start, train_set, train_set, tc);
  ASSERT_GT(result.record.best_epoch, 0u);
  EXPECT_EQ(backbone_fingerprint(result.params), backbone_fingerprint(start));
  result.params.for_each([&](const std::string& name, const Matrix& m, ParamGroup g) {
    if (g == ParamGroup::backbone) {
      start.for_each([&](const std::string& n2, const Matrix& m2, ParamGroup) {
        if (n2 == name) {
          EXPECT_TRUE(bitwise_equal(m, m2)) << name;
        }
      });
    }
  });
  EXPECT_FALSE(result.params.adapters->shared == start.adapters->shared);
  EXPECT_EQ(result.record.trainable_params, extra_param_count(cfg));
}

class FinetuneTest : public ::testing::Test {
 protected:
  ModelConfig cfg = small_config(3, MixingMode::attention, true);
  ParamSet pretrained = init_params(cfg, 13);
};

TEST_F(FinetuneTest, ZeroEpochsReturnsFreshAdaptersOnPretrainedBackbone) {
  std::mt19937_64 rng(66);
  const auto target = random_samples(rng, 6, cfg.lookback, cfg.horizon, 3);
  TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 77;
  const auto out = finetune_adapters(pretrained, 3, target, target, tc);
  EXPECT_EQ(backbone_fingerprint(out.params), backbone_fingerprint(pretrained));
  std::mt19937_64 fresh(77);
  const auto bank = AdapterBank::random(3, cfg.rank, cfg.embed_dim, cfg.adapt_dim, fresh);
  EXPECT_EQ(out.params.adapters->phi, bank.phi);
  EXPECT_EQ(out.params.adapters->shared, bank.shared);
  EXPECT_TRUE(out.record.epochs.empty());
}

TEST_F(FinetuneTest, TrainingKeepsBackboneHash) {
  std::mt19937_64 rng(67);
  const auto target = random_samples(rng, 10, cfg.lookback, cfg.horizon, 3);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 5;
  const auto out = finetune_adapters(pretrained, 3, target, target, tc);
  EXPECT_EQ(backbone_fingerprint(out.params), backbone_fingerprint(pretrained));
}

TEST_F(FinetuneTest, TransfersAcrossChannelCounts) {
  std::mt19937_64 rng(68);
  const auto target = random_samples(rng, 6, cfg.lookback, cfg.horizon, 5);
  TrainConfig tc;
  tc.epochs = 1;
  const auto out = finetune_adapters(pretrained, 5, target, target, tc);
  EXPECT_EQ(out.params.config.channels, 5u);
  EXPECT_EQ(out.params.adapters->channels(), 5u);
  EXPECT_EQ(backbone_fingerprint(out.params), backbone_fingerprint(pretrained));
}

TEST_F(FinetuneTest, RejectsIncompatibleShapesAndModels) {
  std::mt19937_64 rng(69);
  TrainConfig tc;
  tc.epochs = 1;
  const auto wrong_lookback = random_samples(rng, 4, cfg.lookback + 1, cfg.horizon, 3);
  EXPECT_THROW(finetune_adapters(pretrained, 3, wrong_lookback, wrong_lookback, tc), ShapeError);
  const auto wrong_horizon = random_samples(rng, 4, cfg.lookback, cfg.horizon + 2, 3);
  EXPECT_THROW(finetune_adapters(pretrained, 3, wrong_horizon, wrong_horizon, tc), ShapeError);
  const auto no_adapter = init_params(small_config(3, MixingMode::none, false), 1);
  const auto ok = random_samples(rng, 4, cfg.lookback, cfg.horizon, 3);
  EXPECT_THROW(finetune_adapters(no_adapter, 3, ok, ok, tc), std::invalid_argument);
  const auto mlp = init_params(small_config(3, MixingMode::mlp, true), 1);
  const auto five = random_samples(rng, 4, cfg.lookback, cfg.horizon, 5);
  EXPECT_THROW(finetune_adapters(mlp, 5, five, five, tc), ShapeError);
}

}  // namespace
}  // namespace clora::train
