#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace clora {

enum class EmbeddingMode { shared, per_channel };
enum class MixingMode { none, mlp, attention };

std::string_view to_string(EmbeddingMode m) noexcept;
std::string_view to_string(MixingMode m) noexcept;
EmbeddingMode parse_embedding_mode(std::string_view s);
MixingMode parse_mixing_mode(std::string_view s);

/// Architecture hyperparameters of the forecasting backbone.
struct ModelConfig {
  std::size_t lookback = 96;  // T
  std::size_t horizon = 96;   // H
  std::size_t channels = 1;   // C
  std::size_t embed_dim = 64; // D
  std::size_t adapt_dim = 16; // d
  std::size_t rank = 4;       // r
  std::size_t layers = 2;     // L
  EmbeddingMode embedding = EmbeddingMode::shared;
  MixingMode mixing = MixingMode::none;
  bool adapter = false;

  /// Width of the token matrix after the optional adapter concatenation.
  std::size_t effective_dim() const noexcept { return embed_dim + (adapter ? adapt_dim : 0); }
  /// Number of mixing blocks actually instantiated.
  std::size_t mixing_layers() const noexcept { return mixing == MixingMode::none ? 0 : layers; }

  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace clora
