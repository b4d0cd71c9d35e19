#include <stdexcept>
#include <string>

#include "clora/config.hpp"

namespace clora {

std::string_view to_string(EmbeddingMode m) noexcept {
  return m == EmbeddingMode::shared ? "shared" : "per-channel";
}

std::string_view to_string(MixingMode m) noexcept {
  switch (m) {
    case MixingMode::none:
      return "none";
    case MixingMode::mlp:
      return "mlp";
    case MixingMode::attention:
      return "attention";
  }
  return "none";
}

EmbeddingMode parse_embedding_mode(std::string_view s) {
  if (s == "shared") return EmbeddingMode::shared;
  if (s == "per-channel" || s == "per_channel") return EmbeddingMode::per_channel;
  throw std::invalid_argument("unknown embedding mode '" + std::string(s) + "'");
}

MixingMode parse_mixing_mode(std::string_view s) {
  if (s == "none") return MixingMode::none;
  if (s == "mlp" || s == "mlp_mix") return MixingMode::mlp;
  if (s == "attention") return MixingMode::attention;
  throw std::invalid_argument("unknown mixing mode '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (lookback < 2) fail("lookback must be >= 2");
  if (horizon < 1) fail("horizon must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (adapter) {
    if (rank < 1 || rank > embed_dim) {
      fail("rank must satisfy 1 <= rank <= embed_dim (" + std::to_string(embed_dim) + "), got " +
           std::to_string(rank));
    }
    if (adapt_dim < 1) fail("adapt_dim must be >= 1");
  }
}

}  // namespace clora
