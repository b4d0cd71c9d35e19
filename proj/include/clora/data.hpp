#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "clora/matrix.hpp"

namespace clora::data {

/// Malformed or inconsistent input data (bad CSV, short regions, channel mismatch).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { train, val, test };

const char* split_name(Split s) noexcept;

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;

  void validate() const;
};

/// Half-open row range [begin, end) of a split.
struct Region {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const noexcept { return end - begin; }
};

struct TimeSeriesDataset {
  Matrix values;  // T_total x C
  std::vector<std::string> channel_names;
  SplitFractions splits;

  std::size_t length() const noexcept { return values.rows(); }
  std::size_t channels() const noexcept { return values.cols(); }

  /// train = [0, floor(train*N)), val = [train_end, train_end + floor(val*N)),
  /// test = the rest.
  Region region(Split s) const;
};

TimeSeriesDataset load_csv(const std::filesystem::path& path, bool has_time_column);

/// Writes with shortest round-trip float formatting. When `time_column` is
/// set a leading integer column "t" is emitted.
void write_csv(const std::filesystem::path& path, const TimeSeriesDataset& ds, bool time_column);

struct SynthConfig {
  std::size_t channels = 8;
  std::size_t length = 4096;
  std::uint64_t seed = 0;
  double hetero_amp = 1.0;
  double shared_amp = 0.5;
  double noise_sigma = 0.1;
  // Per-channel periods are drawn uniformly from [period_min, period_max].
  double period_min = 12.0;
  double period_max = 48.0;
  // Non-zero: add per-channel phase offsets drawn from this seed and
  // re-draw the latent and noise streams from it. Frequencies still come
  // from `seed`, so the result is a phase-shifted sibling dataset.
  std::uint64_t phase_shift_seed = 0;

  void validate() const;
};

/// Per-channel constants drawn by generate_synthetic, exposed for tests.
struct SynthChannel {
  double frequency;  // cycles per step
  double phase;      // radians
};

std::vector<SynthChannel> synthetic_channels(const SynthConfig& config);

/// x[t][c] = hetero_amp*sin(2*pi*f_c*t + psi_c) + shared_amp*g[t] + noise_sigma*eps,
/// with g a unit-variance AR(1) latent of coefficient 0.9.
TimeSeriesDataset generate_synthetic(const SynthConfig& config);

struct WindowSample {
  Matrix x;  // lookback x C
  Matrix y;  // horizon x C
  std::size_t origin = 0;
};

/// Stride-1 windows lying entirely inside the split region.
std::vector<WindowSample> make_windows(const TimeSeriesDataset& ds, std::size_t lookback,
                                       std::size_t horizon, Split split);

/// Dataset-level z-scoring with train-split statistics.
class Standardizer {
 public:
  static constexpr double kStdFloor = 1e-8;

  Standardizer() = default;
  Standardizer(std::vector<double> mean, std::vector<double> stdev);

  static Standardizer fit(const TimeSeriesDataset& ds);

  TimeSeriesDataset apply(const TimeSeriesDataset& ds) const;
  TimeSeriesDataset invert(const TimeSeriesDataset& ds) const;

  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& stdev() const noexcept { return stdev_; }

 private:
  void check(const TimeSeriesDataset& ds) const;

  std::vector<double> mean_;
  std::vector<double> stdev_;
};

/// Standardized dataset plus its windows for every split.
struct PreparedData {
  TimeSeriesDataset standardized;
  Standardizer stats;
  std::vector<WindowSample> train;
  std::vector<WindowSample> val;
  std::vector<WindowSample> test;
};

PreparedData prepare(const TimeSeriesDataset& raw, std::size_t lookback, std::size_t horizon);

/// Reorders the channel axis: output channel i is input channel perm[i].
Matrix permute_channels(const Matrix& m, const std::vector<std::size_t>& perm);

/// 64-bit FNV-1a over the raw bytes of the values (content fingerprint).
std::uint64_t fingerprint(const Matrix& m);
std::uint64_t fingerprint_bytes(const void* data, std::size_t size,
                                std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace clora::data
