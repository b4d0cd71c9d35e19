#include "clora/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "clora/data.hpp"

namespace clora {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "clora-checkpoint";
constexpr int kVersion = 1;

std::string hex_double(double v) {
  char buf[48];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
  return std::string(buf, ptr);
}

double parse_hex_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::hex);
  if (ec != std::errc() || ptr != last) throw data::DataError("checkpoint: bad float '" + s + "'");
  return v;
}

json config_json(const ModelConfig& c) {
  return json{{"lookback", c.lookback},   {"horizon", c.horizon},
              {"channels", c.channels},   {"embed_dim", c.embed_dim},
              {"adapt_dim", c.adapt_dim}, {"rank", c.rank},
              {"layers", c.layers},       {"embedding", std::string(to_string(c.embedding))},
              {"mixing", std::string(to_string(c.mixing))}, {"adapter", c.adapter}};
}

ModelConfig config_of(const json& j) {
  ModelConfig c;
  c.lookback = j.at("lookback").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.adapt_dim = j.at("adapt_dim").get<std::size_t>();
  c.rank = j.at("rank").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.embedding = parse_embedding_mode(j.at("embedding").get<std::string>());
  c.mixing = parse_mixing_mode(j.at("mixing").get<std::string>());
  c.adapter = j.at("adapter").get<bool>();
  c.validate();
  return c;
}

json tensor_json(const std::string& name, const Matrix& m) {
  json data = json::array();
  for (double v : m.data()) data.push_back(hex_double(v));
  return json{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

void read_tensor(const json& t, const std::string& name, Matrix& m) {
  if (t.at("name").get<std::string>() != name) {
    throw data::DataError("checkpoint: expected tensor '" + name + "', found '" +
                          t.at("name").get<std::string>() + "'");
  }
  const auto rows = t.at("rows").get<std::size_t>();
  const auto cols = t.at("cols").get<std::size_t>();
  if (rows != m.rows() || cols != m.cols()) {
    throw ShapeError("checkpoint: tensor '" + name + "' is " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", configuration needs " + m.shape_string());
  }
  const auto& data = t.at("data");
  if (data.size() != m.size()) throw data::DataError("checkpoint: tensor '" + name + "' truncated");
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = parse_hex_double(data[i].get<std::string>());
}

json parse_container(const std::string& text, const char* kind) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw data::DataError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  if (j.value("format", "") != kFormat || j.value("version", 0) != kVersion) {
    throw data::DataError("checkpoint: unrecognized format or version");
  }
  if (j.value("kind", "") != kind) {
    throw data::DataError("checkpoint: expected kind '" + std::string(kind) + "', found '" +
                          j.value("kind", "") + "'");
  }
  return j;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data::DataError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data::DataError("cannot write checkpoint: " + path.string());
  out << text;
  if (!out) throw data::DataError("failed writing checkpoint: " + path.string());
}

template <typename Fn>
auto wrap_json_errors(Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw data::DataError(std::string("checkpoint: malformed content: ") + e.what());
  }
}

}  // namespace

std::string serialize_checkpoint(const ParamSet& params) {
  params.validate();
  json tensors = json::array();
  params.for_each([&](const std::string& name, const Matrix& m, ParamGroup) {
    tensors.push_back(tensor_json(name, m));
  });
  const json j{{"format", kFormat}, {"version", kVersion},        {"kind", "full"},
               {"config", config_json(params.config)}, {"tensors", std::move(tensors)}};
  return j.dump() + "\n";
}

ParamSet deserialize_checkpoint(const std::string& text) {
  return wrap_json_errors([&] {
    const json j = parse_container(text, "full");
    ParamSet params = ParamSet::zeros(config_of(j.at("config")));
    const auto& tensors = j.at("tensors");
    std::size_t i = 0;
    params.for_each([&](const std::string& name, Matrix& m, ParamGroup) {
      if (i >= tensors.size()) throw data::DataError("checkpoint: missing tensor '" + name + "'");
      read_tensor(tensors[i++], name, m);
    });
    if (i != tensors.size()) throw data::DataError("checkpoint: unexpected extra tensors");
    return params;
  });
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  write_file(path, serialize_checkpoint(params));
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

std::string serialize_adapters(const ParamSet& params) {
  if (!params.adapters) throw std::invalid_argument("serialize_adapters: model has no adapters");
  json tensors = json::array();
  params.for_each([&](const std::string& name, const Matrix& m, ParamGroup group) {
    if (group == ParamGroup::adapter) tensors.push_back(tensor_json(name, m));
  });
  const json j{{"format", kFormat}, {"version", kVersion},        {"kind", "adapters"},
               {"config", config_json(params.config)}, {"tensors", std::move(tensors)}};
  return j.dump() + "\n";
}

AdapterCheckpoint deserialize_adapters(const std::string& text) {
  return wrap_json_errors([&] {
    const json j = parse_container(text, "adapters");
    AdapterCheckpoint out;
    out.config = config_of(j.at("config"));
    if (!out.config.adapter) throw data::DataError("adapter checkpoint: config has adapter off");
    out.bank = AdapterBank::zeros(out.config.channels, out.config.rank, out.config.embed_dim,
                                  out.config.adapt_dim);
    const auto& tensors = j.at("tensors");
    if (tensors.size() != out.config.channels + 1) {
      throw data::DataError("adapter checkpoint: expected " +
                            std::to_string(out.config.channels + 1) + " tensors");
    }
    for (std::size_t c = 0; c < out.config.channels; ++c) {
      read_tensor(tensors[c], "adapter.phi." + std::to_string(c), out.bank.phi[c]);
    }
    read_tensor(tensors[out.config.channels], "adapter.shared", out.bank.shared);
    return out;
  });
}

void save_adapters(const std::filesystem::path& path, const ParamSet& params) {
  write_file(path, serialize_adapters(params));
}

AdapterCheckpoint load_adapters(const std::filesystem::path& path) {
  return deserialize_adapters(read_file(path));
}

void attach_adapters(ParamSet& params, const AdapterCheckpoint& adapters) {
  const ModelConfig& a = params.config;
  const ModelConfig& b = adapters.config;
  if (!a.adapter || a.lookback != b.lookback || a.horizon != b.horizon ||
      a.embed_dim != b.embed_dim || a.adapt_dim != b.adapt_dim || a.rank != b.rank ||
      (a.channels != b.channels &&
       (a.embedding == EmbeddingMode::per_channel || a.mixing == MixingMode::mlp))) {
    throw ShapeError("attach_adapters: adapter checkpoint (C=" + std::to_string(b.channels) +
                     ", D=" + std::to_string(b.embed_dim) + ", r=" + std::to_string(b.rank) +
                     ", d=" + std::to_string(b.adapt_dim) + ") does not fit the model (C=" +
                     std::to_string(a.channels) + ", D=" + std::to_string(a.embed_dim) +
                     ", r=" + std::to_string(a.rank) + ", d=" + std::to_string(a.adapt_dim) + ")");
  }
  adapters.bank.validate();
  // A backbone without channel-indexed parameters serves any channel count.
  params.config.channels = b.channels;
  params.adapters = adapters.bank;
}

std::string config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig config_from_json(const std::string& text) {
  return wrap_json_errors([&] { return config_of(json::parse(text)); });
}

}  // namespace clora
