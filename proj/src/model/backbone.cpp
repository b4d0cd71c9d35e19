#include "clora/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "clora/ops.hpp"

namespace clora {
namespace {

Matrix column(const Matrix& m, std::size_t c) {
  Matrix out(m.rows(), 1);
  for (std::size_t t = 0; t < m.rows(); ++t) out(t, 0) = m(t, c);
  return out;
}

Matrix row_matrix(const Matrix& m, std::size_t r) {
  return Matrix(1, m.cols(), std::vector<double>(m.row(r).begin(), m.row(r).end()));
}

double attention_scale(const Matrix& z) { return 1.0 / std::sqrt(static_cast<double>(z.cols())); }

void check_input(const Matrix& x, const ModelConfig& config) {
  if (x.rows() != config.lookback || x.cols() != config.channels) {
    throw ShapeError("forward: input is " + x.shape_string() + ", model expects " +
                     std::to_string(config.lookback) + "x" + std::to_string(config.channels));
  }
}

}  // namespace

Normalized revin_normalize(const Matrix& x) {
  if (x.rows() < 2) throw ShapeError("revin_normalize: window needs at least 2 steps, got " + x.shape_string());
  const std::size_t T = x.rows();
  const std::size_t C = x.cols();
  Normalized out{Matrix(T, C), RevInState{std::vector<double>(C), std::vector<double>(C)}};
  const auto n = static_cast<double>(T);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) s += x(t, c);
    const double mean = s / n;
    double ss = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double d = x(t, c) - mean;
      ss += d * d;
    }
    const double stdev = std::max(std::sqrt(ss / n), RevInState::kStdFloor);
    out.state.mean[c] = mean;
    out.state.stdev[c] = stdev;
    for (std::size_t t = 0; t < T; ++t) out.values(t, c) = (x(t, c) - mean) / stdev;
  }
  return out;
}

Matrix revin_denormalize(const Matrix& y_norm, const RevInState& state) {
  if (y_norm.cols() != state.mean.size()) {
    throw ShapeError("revin_denormalize: " + std::to_string(y_norm.cols()) +
                     " channels but statistics for " + std::to_string(state.mean.size()));
  }
  Matrix out(y_norm.rows(), y_norm.cols());
  for (std::size_t h = 0; h < y_norm.rows(); ++h) {
    for (std::size_t c = 0; c < y_norm.cols(); ++c) {
      out(h, c) = y_norm(h, c) * state.stdev[c] + state.mean[c];
    }
  }
  return out;
}

Matrix token_embed_preactivation(const Matrix& x_norm, const ParamSet& params) {
  const ModelConfig& cfg = params.config;
  if (x_norm.rows() != cfg.lookback || x_norm.cols() != cfg.channels) {
    throw ShapeError("token_embed: input is " + x_norm.shape_string() + ", expected " +
                     std::to_string(cfg.lookback) + "x" + std::to_string(cfg.channels));
  }
  if (cfg.embedding == EmbeddingMode::shared) {
    return add_row_bias(matmul_tn(x_norm, params.embed[0].weight), params.embed[0].bias);
  }
  Matrix out(cfg.channels, cfg.embed_dim);
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    const EmbedParams& e = params.embed[c];
    const Matrix row = add(matmul_tn(column(x_norm, c), e.weight), e.bias);
    std::copy(row.data().begin(), row.data().end(), out.row(c).begin());
  }
  return out;
}

Matrix token_embed(const Matrix& x_norm, const ParamSet& params) {
  return relu(token_embed_preactivation(x_norm, params));
}

namespace {

Matrix mlp_forward(const Matrix& z, const MlpMixParams& b, ForwardTrace::MlpTrace* trace) {
  Matrix channel_pre = add_col_bias(matmul(b.channel_weight, z), b.channel_bias);
  Matrix mid = add(z, relu(channel_pre));
  Matrix feature_pre = add_row_bias(matmul(mid, b.feature_weight), b.feature_bias);
  Matrix out = add(mid, relu(feature_pre));
  if (trace) *trace = {z, std::move(channel_pre), std::move(mid), std::move(feature_pre)};
  return out;
}

Matrix attention_forward(const Matrix& z, const AttentionParams& b,
                         ForwardTrace::AttentionTrace* trace) {
  Matrix q = add_row_bias(matmul(z, b.query_weight), b.query_bias);
  Matrix k = matmul(z, b.key_weight);
  Matrix v = add_row_bias(matmul(z, b.value_weight), b.value_bias);
  Matrix a = softmax_rows(scale(matmul_nt(q, k), attention_scale(z)));
  Matrix context = matmul(a, v);
  Matrix out = add(z, add_row_bias(matmul(context, b.output_weight), b.output_bias));
  if (trace) *trace = {z, std::move(q), std::move(k), std::move(v), std::move(a), std::move(context)};
  return out;
}

}  // namespace

Matrix mlp_mix_block(const Matrix& z, const MlpMixParams& block) {
  return mlp_forward(z, block, nullptr);
}

Matrix attention_block(const Matrix& z, const AttentionParams& block, Matrix* attention) {
  ForwardTrace::AttentionTrace trace;
  Matrix out = attention_forward(z, block, &trace);
  if (attention) *attention = std::move(trace.attention);
  return out;
}

Matrix channel_mixing_block(const Matrix& z, const ParamSet& params, std::size_t layer,
                            Matrix* attention) {
  switch (params.config.mixing) {
    case MixingMode::none:
      throw std::invalid_argument("channel_mixing_block: model has mixing mode 'none'");
    case MixingMode::mlp:
      return mlp_mix_block(z, params.mlp_blocks.at(layer));
    case MixingMode::attention:
      return attention_block(z, params.attention_blocks.at(layer), attention);
  }
  return z;
}

Matrix project(const Matrix& z, const ParamSet& params) {
  return transpose(add_row_bias(matmul(z, params.proj_weight), params.proj_bias));
}

ForwardTrace forward_trace(const Matrix& x, const ParamSet& params,
                           const PreparedAdapters* prepared) {
  const ModelConfig& cfg = params.config;
  check_input(x, cfg);
  ForwardTrace tr;
  tr.norm = revin_normalize(x);
  tr.embed_pre = token_embed_preactivation(tr.norm.values, params);
  tr.tokens = relu(tr.embed_pre);
  if (cfg.adapter) {
    if (prepared) {
      tr.z0 = assemble_embedding(tr.tokens, *prepared);
    } else {
      tr.z0 = assemble_embedding(tr.tokens, *params.adapters);
    }
  } else {
    tr.z0 = tr.tokens;
  }
  Matrix z = tr.z0;
  for (const auto& block : params.mlp_blocks) {
    tr.mlp.emplace_back();
    z = mlp_forward(z, block, &tr.mlp.back());
  }
  for (const auto& block : params.attention_blocks) {
    tr.attention.emplace_back();
    z = attention_forward(z, block, &tr.attention.back());
  }
  tr.z_final = std::move(z);
  tr.output_norm = project(tr.z_final, params);
  tr.output = revin_denormalize(tr.output_norm, tr.norm.state);
  return tr;
}

Matrix forward(const Matrix& x, const ParamSet& params, const PreparedAdapters* prepared) {
  return forward_trace(x, params, prepared).output;
}

void backward(const ForwardTrace& tr, const Matrix& d_output, const ParamSet& params,
              const PreparedAdapters* prepared, ParamSet& grads) {
  const ModelConfig& cfg = params.config;
  if (!d_output.same_shape(tr.output)) throw_shape_error("backward", d_output, tr.output);

  // Denormalization: y = y_norm * std + mean.
  Matrix d_proj(cfg.channels, cfg.horizon);  // C x H
  for (std::size_t h = 0; h < cfg.horizon; ++h) {
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      d_proj(c, h) = d_output(h, c) * tr.norm.state.stdev[c];
    }
  }
  add_inplace(grads.proj_weight, matmul_tn(tr.z_final, d_proj));
  add_inplace(grads.proj_bias, col_sums(d_proj));
  Matrix dz = matmul_nt(d_proj, params.proj_weight);

  for (std::size_t l = params.attention_blocks.size(); l-- > 0;) {
    const AttentionParams& b = params.attention_blocks[l];
    AttentionParams& g = grads.attention_blocks[l];
    const auto& t = tr.attention[l];
    add_inplace(g.output_weight, matmul_tn(t.context, dz));
    add_inplace(g.output_bias, col_sums(dz));
    const Matrix d_context = matmul_nt(dz, b.output_weight);
    const Matrix d_attn = matmul_nt(d_context, t.value);
    const Matrix d_value = matmul_tn(t.attention, d_context);
    const double s = attention_scale(t.input);
    Matrix d_scores(d_attn.rows(), d_attn.cols());
    for (std::size_t i = 0; i < d_attn.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d_attn.cols(); ++j) dot += d_attn(i, j) * t.attention(i, j);
      for (std::size_t j = 0; j < d_attn.cols(); ++j) {
        d_scores(i, j) = t.attention(i, j) * (d_attn(i, j) - dot) * s;
      }
    }
    const Matrix d_query = matmul(d_scores, t.key);
    const Matrix d_key = matmul_tn(d_scores, t.query);
    add_inplace(g.query_weight, matmul_tn(t.input, d_query));
    add_inplace(g.query_bias, col_sums(d_query));
    add_inplace(g.key_weight, matmul_tn(t.input, d_key));
    add_inplace(g.value_weight, matmul_tn(t.input, d_value));
    add_inplace(g.value_bias, col_sums(d_value));
    add_inplace(dz, matmul_nt(d_query, b.query_weight));
    add_inplace(dz, matmul_nt(d_key, b.key_weight));
    add_inplace(dz, matmul_nt(d_value, b.value_weight));
  }

  for (std::size_t l = params.mlp_blocks.size(); l-- > 0;) {
    const MlpMixParams& b = params.mlp_blocks[l];
    MlpMixParams& g = grads.mlp_blocks[l];
    const auto& t = tr.mlp[l];
    const Matrix d_feature = relu_backward(t.feature_pre, dz);
    add_inplace(g.feature_weight, matmul_tn(t.mid, d_feature));
    add_inplace(g.feature_bias, col_sums(d_feature));
    Matrix d_mid = add(dz, matmul_nt(d_feature, b.feature_weight));
    const Matrix d_channel = relu_backward(t.channel_pre, d_mid);
    add_inplace(g.channel_weight, matmul_nt(d_channel, t.input));
    add_inplace(g.channel_bias, row_sums(d_channel));
    add_inplace(d_mid, matmul_tn(b.channel_weight, d_channel));
    dz = std::move(d_mid);
  }

  Matrix d_tokens;
  if (cfg.adapter) {
    const AdapterBank& bank = *params.adapters;
    AdapterBank& gbank = *grads.adapters;
    PreparedAdapters local;
    if (!prepared) {
      local = prepare_adapters(bank);
      prepared = &local;
    }
    d_tokens = slice_cols(dz, 0, cfg.embed_dim);
    const Matrix d_adapt = slice_cols(dz, cfg.embed_dim, cfg.effective_dim());
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      const Matrix d_row = row_matrix(d_adapt, c);  // 1 x d
      const Matrix token = row_matrix(tr.tokens, c);  // 1 x D
      const Matrix d_token = matmul_nt(d_row, prepared->effective[c]);
      std::transform(d_tokens.row(c).begin(), d_tokens.row(c).end(), d_token.data().begin(),
                     d_tokens.row(c).begin(), [](double a, double b) { return a + b; });
      const Matrix d_pre = relu_backward(prepared->preactivation[c], matmul_tn(token, d_row));
      add_inplace(gbank.phi[c], matmul_nt(bank.shared, d_pre));
      add_inplace(gbank.shared, matmul(bank.phi[c], d_pre));
    }
  } else {
    d_tokens = std::move(dz);
  }

  const Matrix d_embed = relu_backward(tr.embed_pre, d_tokens);
  if (cfg.embedding == EmbeddingMode::shared) {
    add_inplace(grads.embed[0].weight, matmul(tr.norm.values, d_embed));
    add_inplace(grads.embed[0].bias, col_sums(d_embed));
  } else {
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      const Matrix d_row = row_matrix(d_embed, c);
      add_inplace(grads.embed[c].weight, matmul(column(tr.norm.values, c), d_row));
      add_inplace(grads.embed[c].bias, d_row);
    }
  }
}

std::vector<Matrix> attention_maps(const Matrix& x, const ParamSet& params) {
  std::vector<Matrix> maps;
  for (auto& t : forward_trace(x, params).attention) maps.push_back(std::move(t.attention));
  return maps;
}

}  // namespace clora
