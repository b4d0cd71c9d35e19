#pragma once

// Checkpoint container: JSON with a config echo and every matrix in
// row-major order. Values are C99 hex-float strings so 64-bit doubles
// round-trip bit-exactly.
//
//   {"format": "clora-checkpoint", "version": 1, "kind": "full" | "adapters",
//    "config": {...},
//    "tensors": [{"name": ..., "rows": R, "cols": C, "data": ["1.8p+1", ...]}, ...]}

#include <filesystem>
#include <string>

#include "clora/adapter.hpp"
#include "clora/config.hpp"
#include "clora/params.hpp"

namespace clora {

std::string serialize_checkpoint(const ParamSet& params);
ParamSet deserialize_checkpoint(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& path);

/// Adapter-only checkpoint: the config echo plus {phi, W}.
struct AdapterCheckpoint {
  ModelConfig config;
  AdapterBank bank;
};

std::string serialize_adapters(const ParamSet& params);
AdapterCheckpoint deserialize_adapters(const std::string& text);
void save_adapters(const std::filesystem::path& path, const ParamSet& params);
AdapterCheckpoint load_adapters(const std::filesystem::path& path);

/// Replaces the adapter bank of `params` with `adapters` and adopts their
/// channel count. Throws ShapeError if the widths differ, or if the channel
/// count differs and the backbone has channel-indexed parameters.
void attach_adapters(ParamSet& params, const AdapterCheckpoint& adapters);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

}  // namespace clora
