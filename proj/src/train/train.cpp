#include "clora/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "clora/backbone.hpp"
#include "clora/ops.hpp"
#include "clora/optim.hpp"

namespace clora::train {
namespace {

constexpr std::uint64_t kShuffleSalt = 0xD1B54A32D192ED03ULL;

void require_samples(Samples batch, const ModelConfig& cfg, const char* what) {
  if (batch.empty()) throw std::invalid_argument(std::string(what) + ": empty batch");
  for (const auto& s : batch) {
    if (s.x.rows() != cfg.lookback || s.x.cols() != cfg.channels || s.y.rows() != cfg.horizon ||
        s.y.cols() != cfg.channels) {
      throw ShapeError(std::string(what) + ": sample " + s.x.shape_string() + " -> " +
                       s.y.shape_string() + " does not match model " +
                       std::to_string(cfg.lookback) + "x" + std::to_string(cfg.channels) + " -> " +
                       std::to_string(cfg.horizon) + "x" + std::to_string(cfg.channels));
    }
  }
}

std::optional<PreparedAdapters> prepared_for(const ParamSet& params) {
  if (!params.adapters) return std::nullopt;
  return prepare_adapters(*params.adapters);
}

LossGradient batch_gradient(const std::vector<const data::WindowSample*>& batch,
                            const ParamSet& params) {
  const ModelConfig& cfg = params.config;
  const auto prepared = prepared_for(params);
  const PreparedAdapters* prep = prepared ? &*prepared : nullptr;
  const double denom = static_cast<double>(batch.size() * cfg.horizon * cfg.channels);
  LossGradient out{0.0, ParamSet::zeros(cfg)};
  for (const auto* sample : batch) {
    const ForwardTrace trace = forward_trace(sample->x, params, prep);
    Matrix diff = sub(trace.output, sample->y);
    out.loss += sum_squares(diff) / denom;
    backward(trace, scale(diff, 2.0 / denom), params, prep, out.gradient);
  }
  return out;
}

}  // namespace

DivergenceError::DivergenceError(std::size_t epoch, std::size_t batch, double loss)
    : NumericError("training diverged: loss " + std::to_string(loss) + " at epoch " +
                   std::to_string(epoch) + ", batch " + std::to_string(batch)),
      epoch_(epoch),
      batch_(batch) {}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("train config: learning_rate must be a finite value >= 0");
  }
}

std::string TrainRecord::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    const nlohmann::json j{{"epoch", e.epoch},
                           {"train_mse", e.train_mse},
                           {"val_mse", e.val_mse},
                           {"seconds", e.seconds}};
    out += j.dump() + "\n";
  }
  return out;
}

double cd_loss(Samples batch, const ParamSet& params) {
  const ModelConfig& cfg = params.config;
  require_samples(batch, cfg, "cd_loss");
  const auto prepared = prepared_for(params);
  const PreparedAdapters* prep = prepared ? &*prepared : nullptr;
  double total = 0.0;
  for (const auto& s : batch) total += sum_squares(sub(forward(s.x, params, prep), s.y));
  return total / static_cast<double>(batch.size() * cfg.horizon * cfg.channels);
}

Matrix forecast_channel(const Matrix& x, std::size_t c, const ParamSet& params) {
  const ModelConfig& cfg = params.config;
  if (cfg.mixing != MixingMode::none) {
    throw std::invalid_argument("forecast_channel: channel mixing couples channels");
  }
  Matrix series(x.rows(), 1);
  for (std::size_t t = 0; t < x.rows(); ++t) series(t, 0) = x(t, c);
  const Normalized norm = revin_normalize(series);
  const EmbedParams& e = params.embed[cfg.embedding == EmbeddingMode::shared ? 0 : c];
  Matrix token = relu(add(matmul_tn(norm.values, e.weight), e.bias));  // 1 x D
  if (cfg.adapter) {
    const auto adaptation =
        apply_adapter(token.row(0), effective_adapter(params.adapters->phi[c], params.adapters->shared));
    token = concat_cols(token, Matrix(1, adaptation.size(), adaptation));
  }
  const Matrix out = add(matmul(token, params.proj_weight), params.proj_bias);  // 1 x H
  return revin_denormalize(transpose(out), norm.state);
}

double ci_loss(Samples batch, const ParamSet& params) {
  const ModelConfig& cfg = params.config;
  if (cfg.embedding != EmbeddingMode::per_channel) {
    throw std::invalid_argument("ci_loss: requires per-channel embedding");
  }
  if (cfg.mixing != MixingMode::none) throw std::invalid_argument("ci_loss: requires mixing 'none'");
  require_samples(batch, cfg, "ci_loss");
  double total = 0.0;
  for (const auto& s : batch) {
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      const Matrix pred = forecast_channel(s.x, c, params);
      for (std::size_t h = 0; h < cfg.horizon; ++h) {
        const double d = s.y(h, c) - pred(h, 0);
        total += d * d;
      }
    }
  }
  return total / static_cast<double>(batch.size() * cfg.channels * cfg.horizon);
}

LossGradient loss_and_gradient(Samples batch, const ParamSet& params) {
  require_samples(batch, params.config, "loss_and_gradient");
  std::vector<const data::WindowSample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return batch_gradient(ptrs, params);
}

FitResult train_from(ParamSet initial, Samples train, Samples val, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
  config.validate();
  ParamSet params = std::move(initial);
  params.validate();
  require_samples(train, params.config, "train");
  require_samples(val, params.config, "validation");

  const AdamOptions adam{config.learning_rate, 0.9, 0.999, 1e-8};
  std::vector<AdamState> states;
  FitResult result{params, {}};
  result.record.total_params = params.count();
  params.for_each([&](const std::string&, const Matrix& m, ParamGroup group) {
    states.emplace_back(m.rows(), m.cols(), adam);
    if (!(config.freeze_backbone && group == ParamGroup::backbone)) {
      result.record.trainable_params += m.size();
    }
  });

  double best_val = cd_loss(val, params);
  result.record.best_val_mse = best_val;
  std::size_t stale = 0;

  std::mt19937_64 rng(config.seed ^ kShuffleSalt);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const data::WindowSample*> batch;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double weighted_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train[order[i]]);
      LossGradient lg = batch_gradient(batch, params);
      if (!std::isfinite(lg.loss)) throw DivergenceError(epoch, batch_index, lg.loss);
      weighted_loss += lg.loss * static_cast<double>(batch.size());

      std::size_t k = 0;
      std::vector<const Matrix*> grads;
      lg.gradient.for_each([&](const std::string&, const Matrix& g, ParamGroup) { grads.push_back(&g); });
      params.for_each([&](const std::string&, Matrix& p, ParamGroup group) {
        if (!(config.freeze_backbone && group == ParamGroup::backbone)) {
          adam_step(p, *grads[k], states[k]);
        }
        ++k;
      });
    }
    const double val_mse = cd_loss(val, params);
    if (!std::isfinite(val_mse)) throw DivergenceError(epoch, batch_index, val_mse);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    const EpochRecord rec{epoch, weighted_loss / static_cast<double>(train.size()), val_mse,
                          elapsed.count()};
    result.record.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val_mse < best_val) {
      best_val = val_mse;
      result.params = params;
      result.record.best_epoch = epoch;
      result.record.best_val_mse = val_mse;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  return result;
}

FitResult fit(Samples train, Samples val, const ModelConfig& model, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  if (config.epochs < 1) throw std::invalid_argument("fit: epochs must be >= 1");
  return train_from(init_params(model, config.seed), train, val, config, on_epoch);
}

FitResult finetune_adapters(const ParamSet& pretrained, std::size_t target_channels,
                            Samples target_train, Samples target_val, TrainConfig config,
                            const EpochCallback& on_epoch) {
  const ModelConfig& src = pretrained.config;
  if (!src.adapter) throw std::invalid_argument("finetune_adapters: pretrained model has no adapters");
  if (target_channels != src.channels &&
      (src.embedding == EmbeddingMode::per_channel || src.mixing == MixingMode::mlp)) {
    throw ShapeError("finetune_adapters: backbone has channel-indexed parameters for " +
                     std::to_string(src.channels) + " channels; target has " +
                     std::to_string(target_channels));
  }
  ModelConfig target = src;
  target.channels = target_channels;
  ParamSet params = pretrained;
  params.config = target;
  std::mt19937_64 rng(config.seed);
  params.adapters =
      AdapterBank::random(target_channels, src.rank, src.embed_dim, src.adapt_dim, rng);
  config.freeze_backbone = true;
  if (config.epochs == 0) {
    if (!target_train.empty()) require_samples(target_train, target, "finetune");
    FitResult out{std::move(params), {}};
    out.record.total_params = out.params.count();
    out.record.trainable_params = extra_param_count(target);
    return out;
  }
  return train_from(std::move(params), target_train, target_val, config, on_epoch);
}

}  // namespace clora::train
