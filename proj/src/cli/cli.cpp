#include "clora/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "clora/adapter.hpp"
#include "clora/checkpoint.hpp"
#include "clora/data.hpp"
#include "clora/experiments.hpp"
#include "clora/kernels.hpp"
#include "clora/train.hpp"

namespace clora::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Reads flat key=value files and routes unsectioned keys to the selected subcommand.
class SubcommandConfig : public CLI::ConfigBase {
 public:
  explicit SubcommandConfig(const CLI::App& app) : app_(app) {}
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigBase::from_config(input);
    const auto selected = app_.get_subcommands();
    if (selected.empty()) return items;
    for (auto& item : items) {
      if (item.parents.empty()) item.parents.push_back(selected.front()->get_name());
    }
    return items;
  }

 private:
  const CLI::App& app_;
};

struct ModelOptions {
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t embed_dim = 64;
  std::size_t adapt_dim = 16;
  std::size_t rank = 4;
  std::size_t layers = 2;
  std::string mixing = "none";
  std::string embedding = "shared";
  std::string adapter = "on";

  ModelConfig to_config(std::size_t channels) const {
    ModelConfig c;
    c.lookback = lookback;
    c.horizon = horizon;
    c.channels = channels;
    c.embed_dim = embed_dim;
    c.adapt_dim = adapt_dim;
    c.rank = rank;
    c.layers = layers;
    c.mixing = parse_mixing_mode(mixing);
    c.embedding = parse_embedding_mode(embedding);
    c.adapter = adapter == "on";
    c.validate();
    return c;
  }
};

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t patience = 5;
  bool freeze_backbone = false;

  train::TrainConfig to_config() const {
    train::TrainConfig c;
    c.epochs = epochs;
    c.batch_size = batch;
    c.learning_rate = lr;
    c.seed = seed;
    c.patience = patience;
    c.freeze_backbone = freeze_backbone;
    c.validate();
    return c;
  }
};

struct DataOptions {
  std::string path;
  bool time_column = true;
};

void add_model_options(CLI::App* app, ModelOptions& m) {
  app->add_option("--lookback", m.lookback, "Look-back window T")->capture_default_str();
  app->add_option("--horizon", m.horizon, "Forecast horizon H")->capture_default_str();
  app->add_option("--embed-dim", m.embed_dim, "Token embedding width D")->capture_default_str();
  app->add_option("--adapt-dim", m.adapt_dim, "Adaptation width d")->capture_default_str();
  app->add_option("--rank", m.rank, "Adapter rank r")->capture_default_str();
  app->add_option("--layers", m.layers, "Mixing depth L")->capture_default_str();
  app->add_option("--mixing", m.mixing, "Channel mixing")
      ->check(CLI::IsMember({"none", "mlp", "attention"}))
      ->capture_default_str();
  app->add_option("--embedding", m.embedding, "Token embedding")
      ->check(CLI::IsMember({"shared", "per-channel"}))
      ->capture_default_str();
  app->add_option("--adapter", m.adapter, "Channel-aware adapter")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
}

void add_train_options(CLI::App* app, TrainOptions& t) {
  app->add_option("--epochs", t.epochs, "Maximum epochs")->capture_default_str();
  app->add_option("--batch", t.batch, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--lr", t.lr, "Adam learning rate")->capture_default_str();
  app->add_option("--seed", t.seed, "Seed for initialization and shuffling")->capture_default_str();
  app->add_option("--patience", t.patience, "Early-stopping patience")->capture_default_str();
}

void add_data_options(CLI::App* app, DataOptions& d, bool required = true) {
  auto* opt = app->add_option("--data", d.path, "CSV dataset");
  if (required) opt->required();
  app->add_flag("--time-column,!--no-time-column", d.time_column,
                "First CSV column is a time stamp (default on)");
}

data::TimeSeriesDataset load(const DataOptions& d) { return data::load_csv(d.path, d.time_column); }

std::string file_fingerprint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(data::fingerprint_bytes(bytes.data(), bytes.size())));
  return buf;
}

json train_json(const train::TrainConfig& t) {
  return {{"epochs", t.epochs},   {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
          {"seed", t.seed},       {"patience", t.patience},     {"freeze_backbone", t.freeze_backbone}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data::DataError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path ensure_dir(const std::string& dir) {
  if (dir.empty()) throw std::invalid_argument("--out DIR is required");
  fs::create_directories(dir);
  return fs::path(dir);
}

void write_manifest(const fs::path& dir, const std::string& command, const ModelConfig& model,
                    const train::TrainConfig& training, const DataOptions& d,
                    const data::TimeSeriesDataset& ds, const json& artifacts, const json& extra = {}) {
  json m{{"tool", "clora"},
         {"version", kToolVersion},
         {"command", command},
         {"model", json::parse(config_to_json(model))},
         {"training", train_json(training)},
         {"data",
          {{"path", d.path},
           {"time_column", d.time_column},
           {"fingerprint", file_fingerprint(d.path)},
           {"rows", ds.length()},
           {"channels", ds.channels()},
           {"splits", {ds.splits.train, ds.splits.val, ds.splits.test}}}},
         {"seed", training.seed},
         {"kernels", kernels::isa_name(kernels::active().isa)},
         {"artifacts", artifacts}};
  if (!extra.is_null()) m["extra"] = extra;
  write_json(dir / "manifest.json", m);
}

json metrics_json(const char* split, const exp::MetricsReport& r) {
  json j = exp::to_json(r);
  j["split"] = split;
  return j;
}

train::EpochCallback progress(std::ostream& out) {
  return [&out](const train::EpochRecord& e) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch %zu train_mse=%.6f val_mse=%.6f seconds=%.2f\n", e.epoch,
                  e.train_mse, e.val_mse, e.seconds);
    out << buf << std::flush;
  };
}

void require_channels(const ModelConfig& model, const data::TimeSeriesDataset& ds) {
  if (model.channels != ds.channels()) {
    throw ShapeError("checkpoint expects " + std::to_string(model.channels) +
                     " channels but dataset has " + std::to_string(ds.channels()) + " channels");
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Forecasting backbone with channel-aware low-rank adapters", "clora"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  // Subcommands pass --config up to the root, which applies the file to the chosen subcommand.
  app.fallthrough();
  app.set_config("--config", "", "File of key=value lines supplying flag defaults");
  app.config_formatter(std::make_shared<SubcommandConfig>(app));
  app.set_version_flag("--version", kToolVersion);

  // synth
  data::SynthConfig synth;
  std::string synth_out;
  bool synth_time = true;
  auto* synth_cmd = app.add_subcommand("synth", "Write a seeded synthetic dataset as CSV");
  synth_cmd->add_option("--channels", synth.channels, "Number of channels")->capture_default_str();
  synth_cmd->add_option("--length", synth.length, "Number of time steps")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--hetero-amp", synth.hetero_amp, "Per-channel sinusoid amplitude")->capture_default_str();
  synth_cmd->add_option("--shared-amp", synth.shared_amp, "Shared AR(1) latent amplitude")->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  synth_cmd->add_option("--period-min", synth.period_min, "Shortest channel period")->capture_default_str();
  synth_cmd->add_option("--period-max", synth.period_max, "Longest channel period")->capture_default_str();
  synth_cmd->add_option("--phase-shift-seed", synth.phase_shift_seed,
                        "Non-zero: phase-shifted sibling of the --seed dataset")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output CSV path")->required();
  synth_cmd->add_flag("--time-column,!--no-time-column", synth_time, "Emit a leading time column");

  // train
  ModelOptions model;
  TrainOptions training;
  DataOptions dataset;
  std::string out_dir;
  std::string checkpoint_path;
  auto* train_cmd = app.add_subcommand("train", "Fit a model and write checkpoint, record and metrics");
  add_model_options(train_cmd, model);
  add_train_options(train_cmd, training);
  add_data_options(train_cmd, dataset);
  train_cmd->add_option("--out", out_dir, "Run directory")->required();
  train_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint path (default OUT/checkpoint.json)");
  train_cmd->add_flag("--freeze-backbone", training.freeze_backbone, "Update adapter parameters only");

  // eval
  std::string adapters_path;
  std::string split_name = "test";
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  add_data_options(eval_cmd, dataset);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint to evaluate")->required();
  eval_cmd->add_option("--adapters", adapters_path, "Adapter-only checkpoint to attach");
  eval_cmd->add_option("--split", split_name, "Split to evaluate")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", out_dir, "Directory for metrics.json");

  // finetune
  auto* finetune_cmd = app.add_subcommand("finetune", "Fine-tune fresh adapters on a target dataset with the backbone frozen");
  add_train_options(finetune_cmd, training);
  add_data_options(finetune_cmd, dataset);
  finetune_cmd->add_option("--checkpoint", checkpoint_path, "Pretrained checkpoint")->required();
  finetune_cmd->add_option("--out", out_dir, "Run directory")->required();
  finetune_cmd->add_flag("--freeze-backbone", training.freeze_backbone, "Accepted for symmetry; always on");

  // shuffle-test
  std::size_t permutations = 20;
  auto* shuffle_cmd = app.add_subcommand("shuffle-test", "Channel-order permutation test of a checkpoint");
  add_data_options(shuffle_cmd, dataset);
  shuffle_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint to probe")->required();
  shuffle_cmd->add_option("--permutations", permutations, "Number of permutations")->capture_default_str();
  shuffle_cmd->add_option("--seed", training.seed, "Permutation seed")->capture_default_str();
  shuffle_cmd->add_option("--out", out_dir, "Directory for shuffle.json");

  // sweep
  std::string axis = "rank";
  std::vector<std::size_t> values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train one model per value of rank or look-back");
  add_model_options(sweep_cmd, model);
  add_train_options(sweep_cmd, training);
  add_data_options(sweep_cmd, dataset);
  sweep_cmd->add_option("--axis", axis, "Swept parameter")
      ->check(CLI::IsMember({"rank", "lookback"}))
      ->capture_default_str();
  sweep_cmd->add_option("--values", values, "Strictly increasing values")->delimiter(',')->required();
  sweep_cmd->add_option("--out", out_dir, "Run directory")->required();

  // param-count
  std::size_t channels = 7;
  auto* count_cmd = app.add_subcommand("param-count", "Exact parameter counts per channel strategy");
  add_model_options(count_cmd, model);
  count_cmd->add_option("--channels", channels, "Number of channels C")->capture_default_str();

  // capacity-gap
  auto* gap_cmd = app.add_subcommand("capacity-gap", "Train adapter-off/on twins and compare train/test error");
  add_model_options(gap_cmd, model);
  add_train_options(gap_cmd, training);
  add_data_options(gap_cmd, dataset);
  gap_cmd->add_option("--out", out_dir, "Run directory")->required();

  std::vector<const char*> argv{"clora"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth_cmd) {
      const auto ds = data::generate_synthetic(synth);
      data::write_csv(synth_out, ds, synth_time);
      out << "wrote " << ds.length() << "x" << ds.channels() << " to " << synth_out << "\n";
      return kOk;
    }

    if (*count_cmd) {
      ModelConfig base = model.to_config(channels);
      base.adapter = false;
      base.embedding = EmbeddingMode::shared;
      ModelConfig individual = base;
      individual.embedding = EmbeddingMode::per_channel;
      ModelConfig adapted = base;
      adapted.adapter = true;
      adapted.validate();
      const json j{{"adapter_extra", extra_param_count(adapted)},
                   {"total_shared", total_param_count(base)},
                   {"total_shared_adapter", total_param_count(adapted)},
                   {"total_per_channel", total_param_count(individual)}};
      out << "adapter_extra " << j["adapter_extra"] << "\n"
          << "total_shared " << j["total_shared"] << "\n"
          << "total_shared_adapter " << j["total_shared_adapter"] << "\n"
          << "total_per_channel " << j["total_per_channel"] << "\n";
      return kOk;
    }

    if (*train_cmd) {
      const auto ds = load(dataset);
      const ModelConfig cfg = model.to_config(ds.channels());
      const train::TrainConfig tc = training.to_config();
      const fs::path dir = ensure_dir(out_dir);
      const fs::path ckpt = checkpoint_path.empty() ? dir / "checkpoint.json" : fs::path(checkpoint_path);
      write_manifest(dir, "train", cfg, tc, dataset, ds,
                     {{"checkpoint", ckpt.string()}, {"record", "record.jsonl"}, {"metrics", "metrics.json"}});
      const auto prepared = data::prepare(ds, cfg.lookback, cfg.horizon);
      const auto fitted = train::fit(prepared.train, prepared.val, cfg, tc, progress(out));
      save_checkpoint(ckpt, fitted.params);
      write_text(dir / "record.jsonl", fitted.record.to_jsonl());
      write_json(dir / "metrics.json", metrics_json("test", exp::evaluate(fitted.params, prepared.test)));
      out << "best epoch " << fitted.record.best_epoch << ", checkpoint " << ckpt.string() << "\n";
      return kOk;
    }

    if (*eval_cmd) {
      const auto ds = load(dataset);
      ParamSet params = load_checkpoint(checkpoint_path);
      if (!adapters_path.empty()) attach_adapters(params, load_adapters(adapters_path));
      require_channels(params.config, ds);
      const auto prepared = data::prepare(ds, params.config.lookback, params.config.horizon);
      const auto& samples = split_name == "train" ? prepared.train
                            : split_name == "val" ? prepared.val
                                                  : prepared.test;
      const json j = metrics_json(split_name.c_str(), exp::evaluate(params, samples));
      if (!out_dir.empty()) write_json(ensure_dir(out_dir) / "metrics.json", j);
      out << j.dump(2) << "\n";
      return kOk;
    }

    if (*finetune_cmd) {
      const auto ds = load(dataset);
      const ParamSet pretrained = load_checkpoint(checkpoint_path);
      train::TrainConfig tc = training.to_config();
      tc.freeze_backbone = true;
      const fs::path dir = ensure_dir(out_dir);
      ModelConfig target = pretrained.config;
      target.channels = ds.channels();
      write_manifest(dir, "finetune", target, tc, dataset, ds,
                     {{"pretrained", checkpoint_path}, {"checkpoint", "checkpoint.json"},
                      {"adapters", "adapters.json"}, {"record", "record.jsonl"}, {"metrics", "metrics.json"}});
      const auto prepared = data::prepare(ds, pretrained.config.lookback, pretrained.config.horizon);
      train::TrainConfig zero = tc;
      zero.epochs = 0;
      const auto zero_shot = train::finetune_adapters(pretrained, ds.channels(), prepared.train, prepared.val, zero);
      const auto tuned = train::finetune_adapters(pretrained, ds.channels(), prepared.train, prepared.val, tc, progress(out));
      save_checkpoint(dir / "checkpoint.json", tuned.params);
      save_adapters(dir / "adapters.json", tuned.params);
      write_text(dir / "record.jsonl", tuned.record.to_jsonl());
      const json j{{"zero_shot", metrics_json("test", exp::evaluate(zero_shot.params, prepared.test))},
                   {"finetuned", metrics_json("test", exp::evaluate(tuned.params, prepared.test))},
                   {"trainable_params", tuned.record.trainable_params}};
      write_json(dir / "metrics.json", j);
      out << j.dump(2) << "\n";
      return kOk;
    }

    if (*shuffle_cmd) {
      const auto ds = load(dataset);
      const ParamSet params = load_checkpoint(checkpoint_path);
      require_channels(params.config, ds);
      const auto prepared = data::prepare(ds, params.config.lookback, params.config.horizon);
      const auto result = exp::shuffle_test(params, prepared.test, training.seed, permutations);
      if (!out_dir.empty()) {
        const fs::path dir = ensure_dir(out_dir);
        write_json(dir / "shuffle.json", exp::to_json(result));
        write_text(dir / "shuffle.txt", exp::to_text(result));
      }
      out << exp::to_text(result);
      return kOk;
    }

    if (*sweep_cmd) {
      const auto ds = load(dataset);
      const ModelConfig cfg = model.to_config(ds.channels());
      const train::TrainConfig tc = training.to_config();
      const fs::path dir = ensure_dir(out_dir);
      write_manifest(dir, "sweep", cfg, tc, dataset, ds,
                     {{"csv", "sweep.csv"}, {"json", "sweep.json"}}, {{"axis", axis}, {"values", values}});
      const auto result = exp::sweep(exp::parse_sweep_axis(axis), values, cfg, tc, ds, progress(out));
      write_text(dir / "sweep.csv", result.to_csv());
      write_json(dir / "sweep.json", exp::to_json(result));
      out << exp::to_text(result);
      return kOk;
    }

    if (*gap_cmd) {
      const auto ds = load(dataset);
      ModelConfig with = model.to_config(ds.channels());
      with.adapter = true;
      with.validate();
      ModelConfig without = with;
      without.adapter = false;
      const train::TrainConfig tc = training.to_config();
      const fs::path dir = ensure_dir(out_dir);
      write_manifest(dir, "capacity-gap", with, tc, dataset, ds, {{"report", "capacity.json"}});
      const auto prepared = data::prepare(ds, with.lookback, with.horizon);
      const auto off = train::fit(prepared.train, prepared.val, without, tc, progress(out));
      const auto on = train::fit(prepared.train, prepared.val, with, tc, progress(out));
      const auto report = exp::capacity_gap_report(off.params, on.params, prepared.train, prepared.test);
      write_json(dir / "capacity.json", exp::to_json(report));
      write_text(dir / "capacity.txt", exp::to_text(report));
      out << exp::to_text(report);
      return kOk;
    }
  } catch (const train::DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const data::DataError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  err << app.help();
  return kUsage;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace clora::cli
