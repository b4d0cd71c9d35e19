#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string_view>

#include "clora/data.hpp"

namespace clora::data {
namespace {

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

const char* split_name(Split s) noexcept {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "unknown";
}

void SplitFractions::validate() const {
  if (!(train > 0.0 && val > 0.0 && test > 0.0)) {
    throw DataError("split fractions must all be positive");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) throw DataError("split fractions must sum to 1");
}

Region TimeSeriesDataset::region(Split s) const {
  const auto n = static_cast<double>(length());
  const auto train_end = static_cast<std::size_t>(std::floor(splits.train * n));
  const auto val_end = train_end + static_cast<std::size_t>(std::floor(splits.val * n));
  switch (s) {
    case Split::train:
      return {0, train_end};
    case Split::val:
      return {train_end, val_end};
    case Split::test:
      return {val_end, length()};
  }
  return {};
}

TimeSeriesDataset load_csv(const std::filesystem::path& path, bool has_time_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file: " + path.string());

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      for (auto cell : split_line(line)) header.emplace_back(trim(cell));
      break;
    }
  }
  if (header.empty()) throw DataError("CSV file has no header row: " + path.string());
  const std::size_t first_value = has_time_column ? 1 : 0;
  if (header.size() <= first_value) throw DataError("CSV header declares no value columns");

  TimeSeriesDataset ds;
  ds.channel_names.assign(header.begin() + static_cast<std::ptrdiff_t>(first_value), header.end());
  const std::size_t channels = ds.channel_names.size();

  std::vector<double> values;
  std::vector<double> times;
  bool times_numeric = true;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError("ragged row at line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
    }
    if (has_time_column && times_numeric) {
      double t = 0.0;
      if (parse_double(cells[0], t)) {
        times.push_back(t);
      } else {
        times_numeric = false;
      }
    }
    for (std::size_t c = first_value; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        throw DataError("non-numeric cell at line " + std::to_string(line_no) + ", column " +
                        std::to_string(c + 1) + " ('" + header[c] + "'): '" +
                        std::string(trim(cells[c])) + "'");
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw DataError("CSV file has no data rows: " + path.string());
  if (has_time_column && times_numeric) {
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1])) {
        throw DataError("time column not strictly increasing at data row " + std::to_string(i + 1));
      }
    }
  }
  ds.values = Matrix(rows, channels, std::move(values));
  return ds;
}

void write_csv(const std::filesystem::path& path, const TimeSeriesDataset& ds, bool time_column) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CSV file: " + path.string());
  if (time_column) out << "t,";
  for (std::size_t c = 0; c < ds.channels(); ++c) {
    if (c) out << ',';
    out << (c < ds.channel_names.size() ? ds.channel_names[c] : "ch" + std::to_string(c));
  }
  out << '\n';
  for (std::size_t t = 0; t < ds.length(); ++t) {
    if (time_column) out << t << ',';
    for (std::size_t c = 0; c < ds.channels(); ++c) {
      if (c) out << ',';
      out << format_double(ds.values(t, c));
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing CSV file: " + path.string());
}

void SynthConfig::validate() const {
  if (channels < 2) throw DataError("synthetic config: channels must be >= 2");
  if (length < 64) throw DataError("synthetic config: length must be >= 64");
  if (!(period_min >= 2.0) || !(period_max >= period_min)) {
    throw DataError("synthetic config: need 2 <= period_min <= period_max");
  }
  if (!(hetero_amp >= 0.0) || !(shared_amp >= 0.0) || !(noise_sigma >= 0.0)) {
    throw DataError("synthetic config: amplitudes and noise must be non-negative");
  }
}

namespace {

constexpr std::uint64_t kStreamSalt = 0x9E3779B97F4A7C15ULL;
constexpr double kLatentCoefficient = 0.9;

}  // namespace

std::vector<SynthChannel> synthetic_channels(const SynthConfig& config) {
  config.validate();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> period_dist(config.period_min, config.period_max);
  std::uniform_real_distribution<double> phase_dist(0.0, two_pi);
  std::vector<SynthChannel> out(config.channels);
  for (auto& ch : out) {
    ch.frequency = 1.0 / period_dist(rng);
    ch.phase = phase_dist(rng);
  }
  if (config.phase_shift_seed != 0) {
    std::mt19937_64 shift_rng(config.phase_shift_seed);
    for (auto& ch : out) ch.phase = std::fmod(ch.phase + phase_dist(shift_rng), two_pi);
  }
  return out;
}

TimeSeriesDataset generate_synthetic(const SynthConfig& config) {
  const auto channels = synthetic_channels(config);
  const std::uint64_t stream_seed =
      (config.phase_shift_seed != 0 ? config.phase_shift_seed : config.seed) + kStreamSalt;
  std::mt19937_64 rng(stream_seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t n = config.length;
  std::vector<double> latent(n);
  const double innovation = std::sqrt(1.0 - kLatentCoefficient * kLatentCoefficient);
  latent[0] = normal(rng);
  for (std::size_t t = 1; t < n; ++t) {
    latent[t] = kLatentCoefficient * latent[t - 1] + innovation * normal(rng);
  }

  TimeSeriesDataset ds;
  ds.values = Matrix(n, config.channels);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t t = 0; t < n; ++t) {
    const auto tt = static_cast<double>(t);
    for (std::size_t c = 0; c < config.channels; ++c) {
      const double periodic =
          std::sin(two_pi * channels[c].frequency * tt + channels[c].phase);
      double v = config.hetero_amp * periodic + config.shared_amp * latent[t];
      if (config.noise_sigma > 0.0) v += config.noise_sigma * normal(rng);
      ds.values(t, c) = v;
    }
  }
  ds.channel_names.reserve(config.channels);
  for (std::size_t c = 0; c < config.channels; ++c) ds.channel_names.push_back("ch" + std::to_string(c));
  return ds;
}

std::vector<WindowSample> make_windows(const TimeSeriesDataset& ds, std::size_t lookback,
                                       std::size_t horizon, Split split) {
  if (lookback == 0 || horizon == 0) throw DataError("lookback and horizon must be positive");
  const Region region = ds.region(split);
  const std::size_t need = lookback + horizon;
  if (region.length() < need) {
    throw DataError(std::string(split_name(split)) + " region has " +
                    std::to_string(region.length()) + " rows; windowing needs at least " +
                    std::to_string(need) + " (lookback " + std::to_string(lookback) +
                    " + horizon " + std::to_string(horizon) + ")");
  }
  const std::size_t count = region.length() - need + 1;
  const std::size_t channels = ds.channels();
  std::vector<WindowSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t origin = region.begin + k;
    WindowSample s{Matrix(lookback, channels), Matrix(horizon, channels), origin};
    for (std::size_t t = 0; t < lookback; ++t) {
      std::copy_n(ds.values.row(origin + t).begin(), channels, s.x.row(t).begin());
    }
    for (std::size_t t = 0; t < horizon; ++t) {
      std::copy_n(ds.values.row(origin + lookback + t).begin(), channels, s.y.row(t).begin());
    }
    out.push_back(std::move(s));
  }
  return out;
}

Standardizer::Standardizer(std::vector<double> mean, std::vector<double> stdev)
    : mean_(std::move(mean)), stdev_(std::move(stdev)) {
  if (mean_.size() != stdev_.size()) throw DataError("standardizer: mean/std size mismatch");
  for (double& s : stdev_) s = std::max(s, kStdFloor);
}

Standardizer Standardizer::fit(const TimeSeriesDataset& ds) {
  const Region train = ds.region(Split::train);
  if (train.length() == 0) throw DataError("standardizer: empty train split");
  const std::size_t channels = ds.channels();
  std::vector<double> mean(channels, 0.0);
  std::vector<double> stdev(channels, 0.0);
  const auto n = static_cast<double>(train.length());
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) s += ds.values(t, c);
    mean[c] = s / n;
    double ss = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) {
      const double d = ds.values(t, c) - mean[c];
      ss += d * d;
    }
    stdev[c] = std::sqrt(ss / n);
  }
  return Standardizer(std::move(mean), std::move(stdev));
}

void Standardizer::check(const TimeSeriesDataset& ds) const {
  if (ds.channels() != mean_.size()) {
    throw DataError("standardizer fitted on " + std::to_string(mean_.size()) +
                    " channels applied to dataset with " + std::to_string(ds.channels()));
  }
}

TimeSeriesDataset Standardizer::apply(const TimeSeriesDataset& ds) const {
  check(ds);
  TimeSeriesDataset out = ds;
  for (std::size_t t = 0; t < ds.length(); ++t) {
    for (std::size_t c = 0; c < ds.channels(); ++c) {
      out.values(t, c) = (ds.values(t, c) - mean_[c]) / stdev_[c];
    }
  }
  return out;
}

TimeSeriesDataset Standardizer::invert(const TimeSeriesDataset& ds) const {
  check(ds);
  TimeSeriesDataset out = ds;
  for (std::size_t t = 0; t < ds.length(); ++t) {
    for (std::size_t c = 0; c < ds.channels(); ++c) {
      out.values(t, c) = ds.values(t, c) * stdev_[c] + mean_[c];
    }
  }
  return out;
}

PreparedData prepare(const TimeSeriesDataset& raw, std::size_t lookback, std::size_t horizon) {
  raw.splits.validate();
  PreparedData p;
  p.stats = Standardizer::fit(raw);
  p.standardized = p.stats.apply(raw);
  p.train = make_windows(p.standardized, lookback, horizon, Split::train);
  p.val = make_windows(p.standardized, lookback, horizon, Split::val);
  p.test = make_windows(p.standardized, lookback, horizon, Split::test);
  return p;
}

Matrix permute_channels(const Matrix& m, const std::vector<std::size_t>& perm) {
  if (perm.size() != m.cols()) {
    throw DataError("permutation of size " + std::to_string(perm.size()) + " for " +
                    std::to_string(m.cols()) + " channels");
  }
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw DataError("channel order is not a permutation");
    seen[p] = true;
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t t = 0; t < m.rows(); ++t) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(t, c) = m(t, perm[c]);
  }
  return out;
}

std::uint64_t fingerprint_bytes(const void* data, std::size_t size, std::uint64_t seed) {
  std::uint64_t h = seed;
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fingerprint(const Matrix& m) {
  const std::uint64_t dims[2] = {m.rows(), m.cols()};
  const std::uint64_t h = fingerprint_bytes(dims, sizeof(dims));
  return fingerprint_bytes(m.data().data(), m.size() * sizeof(double), h);
}

}  // namespace clora::data
