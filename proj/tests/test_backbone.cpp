#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "clora/backbone.hpp"
#include "clora/data.hpp"
#include "clora/ops.hpp"
#include "test_support.hpp"

namespace clora {
namespace {

using testing::bitwise_equal;
using testing::max_abs_diff;
using testing::random_matrix;
using testing::small_config;

TEST(RevIn, StandardizedChannelIsFixedPoint) {
  Matrix x(4, 1);
  const double v[] = {-1.0, 1.0, -1.0, 1.0};  // mean 0, population std 1
  for (int i = 0; i < 4; ++i) x(i, 0) = v[i];
  EXPECT_LE(max_abs_diff(revin_normalize(x).values, x), 1e-10);
}

TEST(RevIn, ConstantChannelNormalizesToZero) {
  const auto n = revin_normalize(Matrix(6, 2, 5.0));
  EXPECT_EQ(n.values, Matrix(6, 2));
  EXPECT_EQ(n.state.mean[0], 5.0);
  EXPECT_EQ(n.state.stdev[1], RevInState::kStdFloor);
}

TEST(RevIn, OutputMomentsAreZeroAndOne) {
  std::mt19937_64 rng(21);
  Matrix x = random_matrix(rng, 30, 4, 3.0);
  for (std::size_t t = 0; t < 30; ++t) x(t, 2) += 100.0;
  const auto n = revin_normalize(x);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t t = 0; t < 30; ++t) mean += n.values(t, c);
    mean /= 30.0;
    for (std::size_t t = 0; t < 30; ++t) sq += (n.values(t, c) - mean) * (n.values(t, c) - mean);
    EXPECT_NEAR(mean, 0.0, 1e-10);
    EXPECT_NEAR(std::sqrt(sq / 30.0), 1.0, 1e-10);
  }
}

TEST(RevIn, DenormalizeIsAffineInverse) {
  RevInState state{{3.0}, {2.0}};
  EXPECT_EQ(revin_denormalize(Matrix(5, 1), state), Matrix(5, 1, 3.0));
  std::mt19937_64 rng(22);
  const Matrix x = random_matrix(rng, 16, 3, 7.0);
  const auto n = revin_normalize(x);
  EXPECT_LE(max_abs_diff(revin_denormalize(n.values, n.state), x), 1e-10);
  EXPECT_THROW(revin_denormalize(Matrix(5, 2), state), ShapeError);
  EXPECT_THROW(revin_normalize(Matrix(1, 3)), ShapeError);
}

TEST(TokenEmbed, SharedMapGivesIdenticalRowsForIdenticalChannels) {
  const auto cfg = small_config(3, MixingMode::none, false);
  const auto params = init_params(cfg, 1);
  std::mt19937_64 rng(23);
  Matrix x = random_matrix(rng, cfg.lookback, 3);
  for (std::size_t t = 0; t < cfg.lookback; ++t) x(t, 1) = x(t, 0);
  const Matrix z = token_embed(x, params);
  EXPECT_TRUE(std::equal(z.row(0).begin(), z.row(0).end(), z.row(1).begin()));
}

TEST(TokenEmbed, PerChannelMapsDifferForIdenticalChannels) {
  const auto cfg = small_config(2, MixingMode::none, false, EmbeddingMode::per_channel);
  const auto params = init_params(cfg, 1);
  std::mt19937_64 rng(24);
  Matrix x = random_matrix(rng, cfg.lookback, 2);
  for (std::size_t t = 0; t < cfg.lookback; ++t) x(t, 1) = x(t, 0);
  const Matrix z = token_embed(x, params);
  EXPECT_FALSE(std::equal(z.row(0).begin(), z.row(0).end(), z.row(1).begin()));
}

TEST(TokenEmbed, RowsMatchSingleChannelOracle) {
  for (EmbeddingMode mode : {EmbeddingMode::shared, EmbeddingMode::per_channel}) {
    const auto cfg = small_config(3, MixingMode::none, false, mode);
    auto params = init_params(cfg, 2);
    std::mt19937_64 rng(25);
    for (auto& e : params.embed) e.bias = random_matrix(rng, 1, cfg.embed_dim);
    const Matrix x = random_matrix(rng, cfg.lookback, 3);
    const Matrix z = token_embed(x, params);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& e = params.embed[mode == EmbeddingMode::shared ? 0 : c];
      for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < cfg.lookback; ++t) s += x(t, c) * e.weight(t, j);
        EXPECT_NEAR(z(c, j), std::max(0.0, s + e.bias(0, j)), 1e-12);
      }
    }
  }
}

TEST(TokenEmbed, ShapeMismatchThrows) {
  const auto params = init_params(small_config(3, MixingMode::none, false), 1);
  EXPECT_THROW(token_embed(Matrix(10, 3), params), ShapeError);
}

TEST(Mixing, ZeroWeightsAreIdentity) {
  for (MixingMode mode : {MixingMode::mlp, MixingMode::attention}) {
    const auto cfg = small_config(4, mode, true);
    const auto params = ParamSet::zeros(cfg);
    std::mt19937_64 rng(26);
    const Matrix z = random_matrix(rng, 4, cfg.effective_dim());
    EXPECT_EQ(channel_mixing_block(z, params, 0), z) << to_string(mode);
  }
}

TEST(Mixing, NoneModeRejected) {
  const auto params = init_params(small_config(4, MixingMode::none, false), 1);
  EXPECT_THROW(channel_mixing_block(Matrix(4, 16), params, 0), std::invalid_argument);
}

TEST(Mixing, MlpBlockMatchesExplicitFormula) {
  const auto cfg = small_config(3, MixingMode::mlp, false);
  auto params = init_params(cfg, 3);
  std::mt19937_64 rng(27);
  auto& b = params.mlp_blocks[0];
  b.channel_bias = random_matrix(rng, 3, 1);
  b.feature_bias = random_matrix(rng, 1, cfg.embed_dim);
  const Matrix z = random_matrix(rng, 3, cfg.embed_dim);
  // U = Z + ReLU(Wc Z + bc), out = U + ReLU(U Wf + bf), elementwise loops.
  Matrix u(3, cfg.embed_dim), out(3, cfg.embed_dim);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
      double s = b.channel_bias(i, 0);
      for (std::size_t k = 0; k < 3; ++k) s += b.channel_weight(i, k) * z(k, j);
      u(i, j) = z(i, j) + std::max(0.0, s);
    }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
      double s = b.feature_bias(0, j);
      for (std::size_t k = 0; k < cfg.embed_dim; ++k) s += u(i, k) * b.feature_weight(k, j);
      out(i, j) = u(i, j) + std::max(0.0, s);
    }
  EXPECT_LE(max_abs_diff(mlp_mix_block(z, b), out), 1e-12);
}

TEST(Mixing, UniformAttentionAveragesValues) {
  const auto cfg = small_config(5, MixingMode::attention, false);
  auto params = init_params(cfg, 4);
  auto& b = params.attention_blocks[0];
  b.query_weight.fill(0.0);
  b.key_weight.fill(0.0);
  std::mt19937_64 rng(28);
  b.value_bias = random_matrix(rng, 1, cfg.embed_dim);
  b.output_bias = random_matrix(rng, 1, cfg.embed_dim);
  const Matrix z = random_matrix(rng, 5, cfg.embed_dim);
  Matrix attn;
  const Matrix out = attention_block(z, b, &attn);
  EXPECT_LE(max_abs_diff(attn, Matrix(5, 5, 0.2)), 1e-15);
  const Matrix v = add_row_bias(matmul(z, b.value_weight), b.value_bias);
  Matrix mean_v(1, cfg.embed_dim);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) mean_v(0, j) += v(i, j) / 5.0;
  const Matrix mixed = add_row_bias(matmul(mean_v, b.output_weight), b.output_bias);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) EXPECT_NEAR(out(i, j), z(i, j) + mixed(0, j), 1e-12);
}

TEST(Mixing, AttentionRowsSumToOne) {
  const auto cfg = small_config(6, MixingMode::attention, true);
  const auto params = init_params(cfg, 5);
  std::mt19937_64 rng(29);
  const auto maps = attention_maps(random_matrix(rng, cfg.lookback, 6), params);
  ASSERT_EQ(maps.size(), cfg.layers);
  for (const Matrix& a : maps) {
    ASSERT_EQ(a.rows(), 6u);
    ASSERT_EQ(a.cols(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0.0;
      for (double v : a.row(i)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Project, BiasOnlyGivesConstantPrediction) {
  const auto cfg = small_config(3, MixingMode::none, false);
  auto params = ParamSet::zeros(cfg);
  for (std::size_t h = 0; h < cfg.horizon; ++h) params.proj_bias(0, h) = 0.5 + static_cast<double>(h);
  std::mt19937_64 rng(30);
  const Matrix y = project(random_matrix(rng, 3, cfg.embed_dim), params);
  ASSERT_EQ(y.rows(), cfg.horizon);
  for (std::size_t h = 0; h < cfg.horizon; ++h)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y(h, c), 0.5 + static_cast<double>(h));
}

TEST(Project, MatchesPerRowAffineOracle) {
  for (std::size_t horizon : {1u, 8u}) {
    auto cfg = small_config(3, MixingMode::none, false);
    cfg.horizon = horizon;
    auto params = init_params(cfg, 6);
    std::mt19937_64 rng(31);
    params.proj_bias = random_matrix(rng, 1, horizon);
    const Matrix z = random_matrix(rng, 3, cfg.embed_dim);
    const Matrix y = project(z, params);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t h = 0; h < horizon; ++h) {
        double s = params.proj_bias(0, h);
        for (std::size_t j = 0; j < cfg.embed_dim; ++j) s += z(c, j) * params.proj_weight(j, h);
        EXPECT_NEAR(y(h, c), s, 1e-12);
      }
  }
}

TEST(Forward, ConstantProjectionDenormalizesToWindowScale) {
  const auto cfg = small_config(3, MixingMode::none, false);
  auto params = ParamSet::zeros(cfg);
  params.proj_bias.fill(0.75);
  std::mt19937_64 rng(32);
  const Matrix x = random_matrix(rng, cfg.lookback, 3, 4.0);
  const auto stats = revin_normalize(x).state;
  const Matrix y = forward(x, params);
  for (std::size_t h = 0; h < cfg.horizon; ++h)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(y(h, c), 0.75 * stats.stdev[c] + stats.mean[c], 1e-12);
}

TEST(Forward, OutputIsOnRawScale) {
  data::SynthConfig sc;
  sc.length = 256;
  const auto ds = data::generate_synthetic(sc);
  Matrix x(96, sc.channels);
  for (std::size_t t = 0; t < 96; ++t)
    for (std::size_t c = 0; c < sc.channels; ++c) x(t, c) = 50.0 + 10.0 * ds.values(t, c);
  auto cfg = small_config(sc.channels, MixingMode::mlp, true);
  cfg.lookback = 96;
  const Matrix y = forward(x, init_params(cfg, 7));
  const auto stats = revin_normalize(x).state;
  for (std::size_t c = 0; c < sc.channels; ++c) {
    double mean = 0.0;
    for (std::size_t h = 0; h < cfg.horizon; ++h) mean += y(h, c) / static_cast<double>(cfg.horizon);
    EXPECT_LE(std::abs(mean - stats.mean[c]), 2.0 * stats.stdev[c]) << "channel " << c;
  }
}

TEST(Forward, SharedUnmixedModelIsPermutationEquivariant) {
  const auto cfg = small_config(5, MixingMode::none, false);
  const auto params = init_params(cfg, 8);
  std::mt19937_64 rng(33);
  const Matrix x = random_matrix(rng, cfg.lookback, 5);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  EXPECT_TRUE(bitwise_equal(forward(data::permute_channels(x, perm), params),
                            data::permute_channels(forward(x, params), perm)));
}

TEST(Forward, AdapterBreaksPermutationEquivariance) {
  const auto cfg = small_config(5, MixingMode::none, true);
  const auto params = init_params(cfg, 8);
  std::mt19937_64 rng(34);
  const Matrix x = random_matrix(rng, cfg.lookback, 5);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  EXPECT_GT(max_abs_diff(forward(data::permute_channels(x, perm), params),
                         data::permute_channels(forward(x, params), perm)),
            1e-9);
}

TEST(Forward, DeterministicAndTraceConsistent) {
  const auto cfg = small_config(4, MixingMode::attention, true);
  const auto params = init_params(cfg, 9);
  std::mt19937_64 rng(35);
  const Matrix x = random_matrix(rng, cfg.lookback, 4);
  const Matrix y = forward(x, params);
  EXPECT_TRUE(bitwise_equal(y, forward(x, params)));
  const auto trace = forward_trace(x, params);
  EXPECT_TRUE(bitwise_equal(trace.output, y));
  EXPECT_LE(max_abs_diff(revin_denormalize(trace.norm.values, trace.norm.state), x), 1e-10);
}

TEST(Forward, RejectsWrongInputShape) {
  const auto params = init_params(small_config(4, MixingMode::none, false), 1);
  EXPECT_THROW(forward(Matrix(24, 3), params), ShapeError);
}

class GradientSuite : public ::testing::TestWithParam<std::tuple<MixingMode, bool, EmbeddingMode>> {};

TEST_P(GradientSuite, AnalyticMatchesFiniteDifferences) {
  const auto [mixing, adapter, embedding] = GetParam();
  const ModelConfig cfg = small_config(6, mixing, adapter, embedding);
  const auto points = testing::grad_check_points(cfg, 3);
  ASSERT_EQ(points.size(), 3u);
  for (const auto& p : points) EXPECT_LT(p.error, 1e-4) << "seed " << p.seed;
}

INSTANTIATE_TEST_SUITE_P(
    Strategies, GradientSuite,
    ::testing::Values(std::make_tuple(MixingMode::none, true, EmbeddingMode::shared),
                      std::make_tuple(MixingMode::mlp, true, EmbeddingMode::shared),
                      std::make_tuple(MixingMode::attention, true, EmbeddingMode::shared),
                      std::make_tuple(MixingMode::none, false, EmbeddingMode::per_channel),
                      std::make_tuple(MixingMode::mlp, false, EmbeddingMode::shared)));

}  // namespace
}  // namespace clora
