#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clora/adapter.hpp"
#include "clora/config.hpp"
#include "clora/matrix.hpp"

namespace clora {

/// Parameters are split into the backbone (theta) and the adapter bank so
/// that the backbone can be frozen during adapter-only fine-tuning.
enum class ParamGroup { backbone, adapter };

/// Affine map lookback -> embed_dim.
struct EmbedParams {
  Matrix weight;  // T x D
  Matrix bias;    // 1 x D
};

/// Residual channel-axis MLP followed by residual feature-axis MLP.
struct MlpMixParams {
  Matrix channel_weight;  // C x C
  Matrix channel_bias;    // C x 1
  Matrix feature_weight;  // De x De
  Matrix feature_bias;    // 1 x De
};

/// Single-head self-attention over channel tokens.
struct AttentionParams {
  Matrix query_weight, query_bias;
  Matrix key_weight;  // no bias: softmax is invariant to it
  Matrix value_weight, value_bias;
  Matrix output_weight, output_bias;  // weights De x De, biases 1 x De
};

struct ParamShape {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  ParamGroup group;
};

/// Every trainable matrix of a configuration, in canonical order.
std::vector<ParamShape> param_shapes(const ModelConfig& config);

struct ParamSet {
  ModelConfig config;
  std::vector<EmbedParams> embed;  // 1 (shared) or C (per_channel)
  std::vector<MlpMixParams> mlp_blocks;
  std::vector<AttentionParams> attention_blocks;
  Matrix proj_weight;  // De x H
  Matrix proj_bias;    // 1 x H
  std::optional<AdapterBank> adapters;

  /// All-zero parameters with the shapes of `config`.
  static ParamSet zeros(const ModelConfig& config);

  /// Visits every matrix in canonical order (the order of param_shapes).
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit_impl(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit_impl(*this, fn);
  }

  std::size_t count() const;

  /// Throws ShapeError if any matrix disagrees with param_shapes(config).
  void validate() const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  template <typename Self, typename Fn>
  static void visit_impl(Self& self, Fn& fn);
};

template <typename Self, typename Fn>
void ParamSet::visit_impl(Self& self, Fn& fn) {
  const bool shared = self.config.embedding == EmbeddingMode::shared;
  for (std::size_t c = 0; c < self.embed.size(); ++c) {
    const std::string prefix = shared ? "embed." : "embed." + std::to_string(c) + ".";
    fn(prefix + "weight", self.embed[c].weight, ParamGroup::backbone);
    fn(prefix + "bias", self.embed[c].bias, ParamGroup::backbone);
  }
  for (std::size_t l = 0; l < self.mlp_blocks.size(); ++l) {
    const std::string p = "mix." + std::to_string(l) + ".";
    auto& b = self.mlp_blocks[l];
    fn(p + "channel_weight", b.channel_weight, ParamGroup::backbone);
    fn(p + "channel_bias", b.channel_bias, ParamGroup::backbone);
    fn(p + "feature_weight", b.feature_weight, ParamGroup::backbone);
    fn(p + "feature_bias", b.feature_bias, ParamGroup::backbone);
  }
  for (std::size_t l = 0; l < self.attention_blocks.size(); ++l) {
    const std::string p = "attn." + std::to_string(l) + ".";
    auto& b = self.attention_blocks[l];
    fn(p + "query_weight", b.query_weight, ParamGroup::backbone);
    fn(p + "query_bias", b.query_bias, ParamGroup::backbone);
    fn(p + "key_weight", b.key_weight, ParamGroup::backbone);
    fn(p + "value_weight", b.value_weight, ParamGroup::backbone);
    fn(p + "value_bias", b.value_bias, ParamGroup::backbone);
    fn(p + "output_weight", b.output_weight, ParamGroup::backbone);
    fn(p + "output_bias", b.output_bias, ParamGroup::backbone);
  }
  fn(std::string("proj.weight"), self.proj_weight, ParamGroup::backbone);
  fn(std::string("proj.bias"), self.proj_bias, ParamGroup::backbone);
  if (self.adapters) {
    for (std::size_t c = 0; c < self.adapters->phi.size(); ++c) {
      fn("adapter.phi." + std::to_string(c), self.adapters->phi[c], ParamGroup::adapter);
    }
    fn(std::string("adapter.shared"), self.adapters->shared, ParamGroup::adapter);
  }
}

/// Seeded initialization: weights ~ N(0, 1/sqrt(fan_in)), biases zero,
/// adapters per AdapterBank::random.
ParamSet init_params(const ModelConfig& config, std::uint64_t seed);

/// Flattened copy in canonical order, and the inverse.
std::vector<double> flatten(const ParamSet& params);
void unflatten(std::span<const double> flat, ParamSet& params);

/// Content hash of the backbone (theta) matrices only.
std::uint64_t backbone_fingerprint(const ParamSet& params);

}  // namespace clora
