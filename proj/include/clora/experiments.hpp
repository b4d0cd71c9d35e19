#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "clora/data.hpp"
#include "clora/matrix.hpp"
#include "clora/params.hpp"
#include "clora/train.hpp"

namespace clora::exp {

struct MetricsReport {
  double mse = 0.0;
  double mae = 0.0;
  std::vector<double> per_horizon_mse;
  std::size_t n_samples = 0;
};

/// Full-mean MSE/MAE over every element of every H x C sample.
MetricsReport compute_metrics(std::span<const Matrix> predictions, std::span<const Matrix> targets);

std::vector<Matrix> predict(const ParamSet& params, train::Samples samples);
MetricsReport evaluate(const ParamSet& params, train::Samples samples);

/// Percentage improvements of `adapted` over `base`:
/// 100 * (base - adapted) / base for MSE and MAE; combined is their mean.
struct Improvement {
  double mse_pct = 0.0;
  double mae_pct = 0.0;
  double combined_pct = 0.0;
};

Improvement improvement_report(const MetricsReport& base, const MetricsReport& adapted);

struct ShuffleResult {
  MetricsReport baseline;
  std::vector<std::vector<std::size_t>> permutations;
  std::vector<MetricsReport> shuffled;
  std::vector<double> deltas;  // shuffled mse - baseline mse, per permutation
  double mean_delta = 0.0;
  double median_delta = 0.0;
};

/// Seeded uniform permutations of {0..channels-1}.
std::vector<std::vector<std::size_t>> random_permutations(std::size_t channels, std::uint64_t seed,
                                                          std::size_t count);

/// Permutes the channel axis of inputs and targets together while every
/// channel-indexed parameter keeps its position.
ShuffleResult shuffle_test(const ParamSet& params, train::Samples test,
                           const std::vector<std::vector<std::size_t>>& permutations);
ShuffleResult shuffle_test(const ParamSet& params, train::Samples test, std::uint64_t seed,
                           std::size_t n_permutations);

enum class SweepAxis { rank, lookback };

SweepAxis parse_sweep_axis(const std::string& s);
const char* to_string(SweepAxis axis) noexcept;

struct SweepEntry {
  std::size_t value = 0;
  MetricsReport test;
  MetricsReport train;
  std::size_t param_count = 0;
};

struct SweepResult {
  std::string parameter;
  std::vector<SweepEntry> entries;

  /// Header: value,train_mse,test_mse,mae,params (mae is the test MAE).
  std::string to_csv() const;
};

/// One full fit + evaluation per value with the same seed and data pipeline.
/// `raw` is the unstandardized dataset; values must be strictly increasing.
SweepResult sweep(SweepAxis axis, const std::vector<std::size_t>& values, const ModelConfig& model,
                  const train::TrainConfig& training, const data::TimeSeriesDataset& raw,
                  const train::EpochCallback& on_epoch = {});

struct CapacityRow {
  std::string label;
  double train_mse = 0.0;
  double test_mse = 0.0;
  double gap = 0.0;  // test - train
};

struct CapacityGapReport {
  CapacityRow without_adapter;
  CapacityRow with_adapter;
  bool adapter_narrows_gap = false;
};

/// Twins must share every configuration field except the adapter flag.
CapacityGapReport capacity_gap_report(const ParamSet& without_adapter, const ParamSet& with_adapter,
                                      train::Samples train, train::Samples test);

double median(std::vector<double> values);

nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const Improvement& i);
nlohmann::json to_json(const ShuffleResult& s);
nlohmann::json to_json(const SweepResult& s);
nlohmann::json to_json(const CapacityGapReport& r);

std::string to_text(const MetricsReport& m);
std::string to_text(const ShuffleResult& s);
std::string to_text(const SweepResult& s);
std::string to_text(const CapacityGapReport& r);

}  // namespace clora::exp
