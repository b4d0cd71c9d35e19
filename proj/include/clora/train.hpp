#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clora/data.hpp"
#include "clora/matrix.hpp"
#include "clora/params.hpp"

namespace clora::train {

/// Training produced a non-finite loss. The message names epoch and batch.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch, double loss);
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool freeze_backbone = false;
  std::size_t patience = 5;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double seconds = 0.0;
};

struct TrainRecord {
  std::vector<EpochRecord> epochs;
  std::size_t total_params = 0;
  std::size_t trainable_params = 0;
  std::size_t best_epoch = 0;  // 0: the initial parameters were never improved on
  double best_val_mse = 0.0;

  /// One JSON object per line: {"epoch", "train_mse", "val_mse", "seconds"}.
  std::string to_jsonl() const;
};

using Samples = std::span<const data::WindowSample>;

/// (1 / (N*H*C)) * sum_i ||Y_i - f(X_i)||_F^2.
double cd_loss(Samples batch, const ParamSet& params);

/// Channel-individual loss: every channel is forecast from its own column
/// only, through its own embedding theta_c (and adapter c, if enabled), and
/// the squared errors are averaged over N*C*H. Requires per-channel
/// embedding and no mixing.
double ci_loss(Samples batch, const ParamSet& params);

/// Forecast of channel `c` computed from column c of `x` alone (H x 1).
Matrix forecast_channel(const Matrix& x, std::size_t c, const ParamSet& params);

struct LossGradient {
  double loss;
  ParamSet gradient;
};

/// cd_loss and its gradient with respect to every parameter.
LossGradient loss_and_gradient(Samples batch, const ParamSet& params);

struct FitResult {
  ParamSet params;
  TrainRecord record;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeded initialization followed by train_from.
FitResult fit(Samples train, Samples val, const ModelConfig& model, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

/// Adam over shuffled minibatches starting from `initial`. Returns the
/// parameters with the best validation loss; stops after `patience`
/// epochs without improvement. Frozen backbone parameters are never touched.
FitResult train_from(ParamSet initial, Samples train, Samples val, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

/// Keeps theta of `pretrained`, attaches freshly initialized adapters sized
/// for `target_channels` (seeded by config.seed) and trains only those.
/// With config.epochs == 0 the fresh-adapter model is returned untrained.
FitResult finetune_adapters(const ParamSet& pretrained, std::size_t target_channels,
                            Samples target_train, Samples target_val, TrainConfig config,
                            const EpochCallback& on_epoch = {});

}  // namespace clora::train
