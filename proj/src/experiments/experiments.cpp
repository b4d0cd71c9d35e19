#include "clora/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "clora/adapter.hpp"
#include "clora/backbone.hpp"

namespace clora::exp {
namespace {

std::string line(const char* fmt, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

}  // namespace

MetricsReport compute_metrics(std::span<const Matrix> predictions, std::span<const Matrix> targets) {
  if (predictions.empty()) throw std::invalid_argument("compute_metrics: no samples");
  if (predictions.size() != targets.size()) {
    throw ShapeError("compute_metrics: " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(targets.size()) + " targets");
  }
  const std::size_t H = predictions.front().rows();
  const std::size_t C = predictions.front().cols();
  MetricsReport r;
  r.n_samples = predictions.size();
  // Totals are kept per (horizon, channel) cell and reduced over channels in
  // sorted order, so reordering channels cannot change a single bit.
  std::vector<double> sq(H * C, 0.0);
  std::vector<double> ab(H * C, 0.0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Matrix& p = predictions[i];
    const Matrix& t = targets[i];
    if (!p.same_shape(t) || p.rows() != H || p.cols() != C) {
      throw_shape_error("compute_metrics", p, t);
    }
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t c = 0; c < C; ++c) {
        const double d = p(h, c) - t(h, c);
        sq[h * C + c] += d * d;
        ab[h * C + c] += std::abs(d);
      }
    }
  }
  auto channel_sum = [C](std::vector<double>::iterator row) {
    std::sort(row, row + static_cast<std::ptrdiff_t>(C));
    return std::accumulate(row, row + static_cast<std::ptrdiff_t>(C), 0.0);
  };
  double sq_total = 0.0;
  double ab_total = 0.0;
  r.per_horizon_mse.assign(H, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    r.per_horizon_mse[h] = channel_sum(sq.begin() + static_cast<std::ptrdiff_t>(h * C));
    sq_total += r.per_horizon_mse[h];
    ab_total += channel_sum(ab.begin() + static_cast<std::ptrdiff_t>(h * C));
  }
  const auto n = static_cast<double>(predictions.size() * H * C);
  r.mse = sq_total / n;
  r.mae = ab_total / n;
  for (double& v : r.per_horizon_mse) v /= static_cast<double>(predictions.size() * C);
  return r;
}

std::vector<Matrix> predict(const ParamSet& params, train::Samples samples) {
  std::optional<PreparedAdapters> prepared;
  if (params.adapters) prepared = prepare_adapters(*params.adapters);
  std::vector<Matrix> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(forward(s.x, params, prepared ? &*prepared : nullptr));
  return out;
}

MetricsReport evaluate(const ParamSet& params, train::Samples samples) {
  const auto preds = predict(params, samples);
  std::vector<Matrix> targets;
  targets.reserve(samples.size());
  for (const auto& s : samples) targets.push_back(s.y);
  return compute_metrics(preds, targets);
}

Improvement improvement_report(const MetricsReport& base, const MetricsReport& adapted) {
  if (base.mse == 0.0 || base.mae == 0.0) {
    throw std::invalid_argument("improvement_report: base metric is zero");
  }
  Improvement i;
  i.mse_pct = 100.0 * (base.mse - adapted.mse) / base.mse;
  i.mae_pct = 100.0 * (base.mae - adapted.mae) / base.mae;
  i.combined_pct = 0.5 * (i.mse_pct + i.mae_pct);
  return i;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<std::vector<std::size_t>> random_permutations(std::size_t channels, std::uint64_t seed,
                                                          std::size_t count) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<std::size_t> perm(channels);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    out.push_back(std::move(perm));
  }
  return out;
}

ShuffleResult shuffle_test(const ParamSet& params, train::Samples test,
                           const std::vector<std::vector<std::size_t>>& permutations) {
  if (params.config.channels < 2) throw std::invalid_argument("shuffle_test: needs at least 2 channels");
  if (permutations.empty()) throw std::invalid_argument("shuffle_test: no permutations");
  ShuffleResult r;
  r.baseline = evaluate(params, test);
  r.permutations = permutations;
  std::vector<data::WindowSample> permuted(test.size());
  for (const auto& perm : permutations) {
    for (std::size_t i = 0; i < test.size(); ++i) {
      permuted[i].x = data::permute_channels(test[i].x, perm);
      permuted[i].y = data::permute_channels(test[i].y, perm);
      permuted[i].origin = test[i].origin;
    }
    r.shuffled.push_back(evaluate(params, permuted));
    r.deltas.push_back(r.shuffled.back().mse - r.baseline.mse);
  }
  r.mean_delta = std::accumulate(r.deltas.begin(), r.deltas.end(), 0.0) /
                 static_cast<double>(r.deltas.size());
  r.median_delta = median(r.deltas);
  return r;
}

ShuffleResult shuffle_test(const ParamSet& params, train::Samples test, std::uint64_t seed,
                           std::size_t n_permutations) {
  return shuffle_test(params, test,
                      random_permutations(params.config.channels, seed, n_permutations));
}

SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "rank") return SweepAxis::rank;
  if (s == "lookback") return SweepAxis::lookback;
  throw std::invalid_argument("unknown sweep axis '" + s + "' (expected rank or lookback)");
}

const char* to_string(SweepAxis axis) noexcept {
  return axis == SweepAxis::rank ? "rank" : "lookback";
}

SweepResult sweep(SweepAxis axis, const std::vector<std::size_t>& values, const ModelConfig& model,
                  const train::TrainConfig& training, const data::TimeSeriesDataset& raw,
                  const train::EpochCallback& on_epoch) {
  if (values.empty()) throw std::invalid_argument("sweep: no values");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] <= values[i - 1]) throw std::invalid_argument("sweep: values must be strictly increasing");
  }
  for (std::size_t v : values) {
    if (axis == SweepAxis::rank && (!model.adapter || v < 1 || v > model.embed_dim)) {
      throw std::invalid_argument("sweep: rank " + std::to_string(v) +
                                  " invalid (needs adapter on and 1 <= rank <= embed_dim)");
    }
    if (axis == SweepAxis::lookback && v < 2) {
      throw std::invalid_argument("sweep: lookback " + std::to_string(v) + " invalid (needs >= 2)");
    }
  }

  SweepResult result;
  result.parameter = to_string(axis);
  std::optional<data::PreparedData> shared_data;
  if (axis == SweepAxis::rank) shared_data = data::prepare(raw, model.lookback, model.horizon);
  for (std::size_t v : values) {
    ModelConfig cfg = model;
    cfg.channels = raw.channels();
    std::optional<data::PreparedData> own;
    if (axis == SweepAxis::rank) {
      cfg.rank = v;
    } else {
      cfg.lookback = v;
      own = data::prepare(raw, cfg.lookback, cfg.horizon);
    }
    const data::PreparedData& d = own ? *own : *shared_data;
    const auto fitted = train::fit(d.train, d.val, cfg, training, on_epoch);
    result.entries.push_back(
        {v, evaluate(fitted.params, d.test), evaluate(fitted.params, d.train), total_param_count(cfg)});
  }
  return result;
}

std::string SweepResult::to_csv() const {
  std::string out = "value,train_mse,test_mse,mae,params\n";
  for (const auto& e : entries) {
    out += line("%zu,%.17g,%.17g,%.17g,%zu\n", e.value, e.train.mse, e.test.mse, e.test.mae,
                e.param_count);
  }
  return out;
}

CapacityGapReport capacity_gap_report(const ParamSet& without_adapter, const ParamSet& with_adapter,
                                      train::Samples train, train::Samples test) {
  ModelConfig a = without_adapter.config;
  ModelConfig b = with_adapter.config;
  if (a.adapter || !b.adapter) {
    throw std::invalid_argument("capacity_gap_report: expected (adapter off, adapter on) twins");
  }
  a.adapter = b.adapter = false;
  if (!(a == b)) throw std::invalid_argument("capacity_gap_report: twins differ beyond the adapter flag");

  auto row = [&](const char* label, const ParamSet& p) {
    CapacityRow r{label, evaluate(p, train).mse, evaluate(p, test).mse, 0.0};
    r.gap = r.test_mse - r.train_mse;
    return r;
  };
  CapacityGapReport rep{row("adapter-off", without_adapter), row("adapter-on", with_adapter), false};
  rep.adapter_narrows_gap = std::abs(rep.with_adapter.gap) < std::abs(rep.without_adapter.gap);
  return rep;
}

nlohmann::json to_json(const MetricsReport& m) {
  return {{"mse", m.mse}, {"mae", m.mae}, {"per_horizon_mse", m.per_horizon_mse},
          {"n_samples", m.n_samples}};
}

nlohmann::json to_json(const Improvement& i) {
  return {{"mse_pct", i.mse_pct}, {"mae_pct", i.mae_pct}, {"combined_pct", i.combined_pct}};
}

nlohmann::json to_json(const ShuffleResult& s) {
  nlohmann::json perms = nlohmann::json::array();
  for (std::size_t k = 0; k < s.permutations.size(); ++k) {
    perms.push_back({{"permutation", s.permutations[k]}, {"mse", s.shuffled[k].mse},
                     {"mae", s.shuffled[k].mae}, {"delta", s.deltas[k]}});
  }
  return {{"baseline", to_json(s.baseline)}, {"permutations", std::move(perms)},
          {"mean_delta", s.mean_delta}, {"median_delta", s.median_delta}};
}

nlohmann::json to_json(const SweepResult& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : s.entries) {
    rows.push_back({{"value", e.value}, {"train", to_json(e.train)}, {"test", to_json(e.test)},
                    {"params", e.param_count}});
  }
  return {{"parameter", s.parameter}, {"entries", std::move(rows)}};
}

nlohmann::json to_json(const CapacityGapReport& r) {
  auto row = [](const CapacityRow& x) {
    return nlohmann::json{{"label", x.label}, {"train_mse", x.train_mse}, {"test_mse", x.test_mse},
                          {"gap", x.gap}};
  };
  return {{"rows", {row(r.without_adapter), row(r.with_adapter)}},
          {"adapter_narrows_gap", r.adapter_narrows_gap}};
}

std::string to_text(const MetricsReport& m) {
  std::string out = line("%-10s %12s %12s\n", "samples", "mse", "mae");
  out += line("%-10zu %12.6f %12.6f\n", m.n_samples, m.mse, m.mae);
  return out;
}

std::string to_text(const ShuffleResult& s) {
  std::string out = line("%-12s %12s %12s\n", "run", "mse", "delta");
  out += line("%-12s %12.6f %12.6f\n", "baseline", s.baseline.mse, 0.0);
  for (std::size_t k = 0; k < s.shuffled.size(); ++k) {
    out += line("%-12s %12.6f %12.6f\n", ("perm-" + std::to_string(k)).c_str(), s.shuffled[k].mse,
                s.deltas[k]);
  }
  out += line("%-12s %12s %12.6f\n", "median", "", s.median_delta);
  return out;
}

std::string to_text(const SweepResult& s) {
  std::string out = line("%-10s %12s %12s %12s %10s\n", s.parameter.c_str(), "train_mse",
                         "test_mse", "test_mae", "params");
  for (const auto& e : s.entries) {
    out += line("%-10zu %12.6f %12.6f %12.6f %10zu\n", e.value, e.train.mse, e.test.mse, e.test.mae,
                e.param_count);
  }
  return out;
}

std::string to_text(const CapacityGapReport& r) {
  std::string out = line("%-12s %12s %12s %12s\n", "model", "train_mse", "test_mse", "gap");
  for (const auto* row : {&r.without_adapter, &r.with_adapter}) {
    out += line("%-12s %12.6f %12.6f %12.6f\n", row->label.c_str(), row->train_mse, row->test_mse,
                row->gap);
  }
  out += std::string("adapter narrows gap: ") + (r.adapter_narrows_gap ? "yes" : "no") + "\n";
  return out;
}

}  // namespace clora::exp
