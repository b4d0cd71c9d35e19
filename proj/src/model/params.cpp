#include "clora/params.hpp"

#include <cmath>
#include <random>
#include <string_view>

#include "clora/data.hpp"

namespace clora {

std::vector<ParamShape> param_shapes(const ModelConfig& config) {
  config.validate();
  const std::size_t T = config.lookback;
  const std::size_t H = config.horizon;
  const std::size_t C = config.channels;
  const std::size_t D = config.embed_dim;
  const std::size_t De = config.effective_dim();
  std::vector<ParamShape> out;
  auto add = [&](std::string name, std::size_t r, std::size_t c, ParamGroup g = ParamGroup::backbone) {
    out.push_back({std::move(name), r, c, g});
  };
  if (config.embedding == EmbeddingMode::shared) {
    add("embed.weight", T, D);
    add("embed.bias", 1, D);
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      add("embed." + std::to_string(c) + ".weight", T, D);
      add("embed." + std::to_string(c) + ".bias", 1, D);
    }
  }
  for (std::size_t l = 0; l < config.mixing_layers(); ++l) {
    if (config.mixing == MixingMode::mlp) {
      const std::string p = "mix." + std::to_string(l) + ".";
      add(p + "channel_weight", C, C);
      add(p + "channel_bias", C, 1);
      add(p + "feature_weight", De, De);
      add(p + "feature_bias", 1, De);
    } else {
      const std::string p = "attn." + std::to_string(l) + ".";
      for (const char* part : {"query", "key", "value", "output"}) {
        add(p + part + "_weight", De, De);
        // A key bias shifts every score in a row equally, so softmax ignores it.
        if (std::string_view(part) != "key") add(p + part + "_bias", 1, De);
      }
    }
  }
  add("proj.weight", De, H);
  add("proj.bias", 1, H);
  if (config.adapter) {
    for (std::size_t c = 0; c < C; ++c) {
      add("adapter.phi." + std::to_string(c), config.rank, D, ParamGroup::adapter);
    }
    add("adapter.shared", config.rank, config.adapt_dim, ParamGroup::adapter);
  }
  return out;
}

ParamSet ParamSet::zeros(const ModelConfig& config) {
  config.validate();
  ParamSet p;
  p.config = config;
  const std::size_t T = config.lookback;
  const std::size_t C = config.channels;
  const std::size_t D = config.embed_dim;
  const std::size_t De = config.effective_dim();
  const std::size_t n_embed = config.embedding == EmbeddingMode::shared ? 1 : C;
  p.embed.assign(n_embed, EmbedParams{Matrix(T, D), Matrix(1, D)});
  for (std::size_t l = 0; l < config.mixing_layers(); ++l) {
    if (config.mixing == MixingMode::mlp) {
      p.mlp_blocks.push_back({Matrix(C, C), Matrix(C, 1), Matrix(De, De), Matrix(1, De)});
    } else {
      p.attention_blocks.push_back({Matrix(De, De), Matrix(1, De), Matrix(De, De), Matrix(De, De), Matrix(1, De),
                                    Matrix(De, De), Matrix(1, De)});
    }
  }
  p.proj_weight = Matrix(De, config.horizon);
  p.proj_bias = Matrix(1, config.horizon);
  if (config.adapter) p.adapters = AdapterBank::zeros(C, config.rank, D, config.adapt_dim);
  return p;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m, ParamGroup) { n += m.size(); });
  return n;
}

void ParamSet::validate() const {
  const auto shapes = param_shapes(config);
  std::size_t i = 0;
  for_each([&](const std::string& name, const Matrix& m, ParamGroup) {
    if (i >= shapes.size() || shapes[i].name != name || shapes[i].rows != m.rows() ||
        shapes[i].cols != m.cols()) {
      throw ShapeError("parameter '" + name + "' has shape " + m.shape_string() +
                       " inconsistent with the model configuration");
    }
    if (!m.all_finite()) throw NumericError("parameter '" + name + "' has non-finite entries");
    ++i;
  });
  if (i != shapes.size()) {
    throw ShapeError("parameter set has " + std::to_string(i) + " matrices, configuration needs " +
                     std::to_string(shapes.size()));
  }
}

constexpr double kResidualInitScale = 0.1;

ParamSet init_params(const ModelConfig& config, std::uint64_t seed) {
  ParamSet p = ParamSet::zeros(config);
  std::mt19937_64 rng(seed);
  p.for_each([&](const std::string& name, Matrix& m, ParamGroup group) {
    if (group == ParamGroup::adapter) return;
    if (std::string_view(name).ends_with("bias")) return;
    // x * W convention: fan-in is the row count (the channel-mixing matrix is square).
    double sd = 1.0 / std::sqrt(static_cast<double>(m.rows()));
    // Residual branches start small so stacked mixing blocks begin near the identity.
    if (name.starts_with("mix.") || name.ends_with("output_weight")) sd *= kResidualInitScale;
    std::normal_distribution<double> dist(0.0, sd);
    for (double& v : m.data()) v = dist(rng);
  });
  if (config.adapter) {
    p.adapters = AdapterBank::random(config.channels, config.rank, config.embed_dim,
                                     config.adapt_dim, rng);
  }
  return p;
}

std::vector<double> flatten(const ParamSet& params) {
  std::vector<double> flat;
  flat.reserve(params.count());
  params.for_each([&](const std::string&, const Matrix& m, ParamGroup) {
    flat.insert(flat.end(), m.data().begin(), m.data().end());
  });
  return flat;
}

void unflatten(std::span<const double> flat, ParamSet& params) {
  if (flat.size() != params.count()) {
    throw ShapeError("unflatten: " + std::to_string(flat.size()) + " values for " +
                     std::to_string(params.count()) + " parameters");
  }
  std::size_t offset = 0;
  params.for_each([&](const std::string&, Matrix& m, ParamGroup) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), m.size(), m.data().begin());
    offset += m.size();
  });
}

std::uint64_t backbone_fingerprint(const ParamSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  params.for_each([&](const std::string& name, const Matrix& m, ParamGroup group) {
    if (group != ParamGroup::backbone) return;
    h = data::fingerprint_bytes(name.data(), name.size(), h);
    h = data::fingerprint_bytes(m.data().data(), m.size() * sizeof(double), h);
  });
  return h;
}

}  // namespace clora
