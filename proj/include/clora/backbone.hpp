#pragma once

// The forecasting template: per-window reversible normalization, token
// embedding (one token per channel), optional channel mixing, and a
// projection from token width to the horizon.

#include <cstddef>
#include <vector>

#include "clora/adapter.hpp"
#include "clora/matrix.hpp"
#include "clora/params.hpp"

namespace clora {

/// Per-channel statistics of one look-back window.
struct RevInState {
  static constexpr double kStdFloor = 1e-8;
  std::vector<double> mean;
  std::vector<double> stdev;
};

struct Normalized {
  Matrix values;  // T x C
  RevInState state;
};

/// Z-scores every channel of the window by its own mean and (population)
/// standard deviation. Requires T >= 2.
Normalized revin_normalize(const Matrix& x);

/// y * std_c + mean_c per channel.
Matrix revin_denormalize(const Matrix& y_norm, const RevInState& state);

/// Pre-activation tokens: row c = x_norm[:, c]^T W_e + b_e (W_e per channel
/// in per_channel mode). C x D.
Matrix token_embed_preactivation(const Matrix& x_norm, const ParamSet& params);
/// ReLU of the above.
Matrix token_embed(const Matrix& x_norm, const ParamSet& params);

/// Z + ReLU(Wc Z + bc), then U + ReLU(U Wf + bf).
Matrix mlp_mix_block(const Matrix& z, const MlpMixParams& block);

/// Z + softmax(Q K^T / sqrt(De)) V Wo + bo with Q, K, V affine in Z.
/// When `attention` is non-null it receives the C x C attention matrix.
Matrix attention_block(const Matrix& z, const AttentionParams& block, Matrix* attention = nullptr);

/// Applies mixing block `layer` of `params`. Throws std::invalid_argument
/// when the configuration has no mixing.
Matrix channel_mixing_block(const Matrix& z, const ParamSet& params, std::size_t layer,
                            Matrix* attention = nullptr);

/// (Z W_p + b_p)^T, H x C.
Matrix project(const Matrix& z, const ParamSet& params);

/// Everything the backward pass needs from one forward evaluation.
struct ForwardTrace {
  Normalized norm;
  Matrix embed_pre;  // C x D
  Matrix tokens;     // C x D, post-ReLU
  Matrix z0;         // C x De

  struct MlpTrace {
    Matrix input, channel_pre, mid, feature_pre;
  };
  struct AttentionTrace {
    Matrix input, query, key, value, attention, context;
  };
  std::vector<MlpTrace> mlp;
  std::vector<AttentionTrace> attention;

  Matrix z_final;      // C x De
  Matrix output_norm;  // H x C
  Matrix output;       // H x C
};

/// Full forward pass recording intermediates. `prepared` may be supplied to
/// reuse effective adapters across samples of one parameter snapshot.
ForwardTrace forward_trace(const Matrix& x, const ParamSet& params,
                           const PreparedAdapters* prepared = nullptr);

/// normalize -> embed -> [adapter concat] -> mixing blocks -> project -> denormalize.
Matrix forward(const Matrix& x, const ParamSet& params, const PreparedAdapters* prepared = nullptr);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
/// The RevIN statistics are treated as constants of the input.
void backward(const ForwardTrace& trace, const Matrix& d_output, const ParamSet& params,
              const PreparedAdapters* prepared, ParamSet& grads);

/// Attention matrices of every attention block for input `x` (empty for
/// other mixing modes).
std::vector<Matrix> attention_maps(const Matrix& x, const ParamSet& params);

}  // namespace clora
