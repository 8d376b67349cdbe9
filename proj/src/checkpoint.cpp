#include "frn/checkpoint.hpp"

#include <cstring>

#include "frn/binary_io.hpp"
#include "frn/errors.hpp"

namespace frn {

nlohmann::json to_json(const ModelConfig& c) {
  return {{"feature_dim", c.feature_dim},
          {"projection_dim", c.projection_dim},
          {"g_layers", c.g_layers},
          {"f_layers", c.f_layers},
          {"dropout_rate", c.dropout_rate},
          {"vse_enabled", c.vse_enabled},
          {"vocab_size", c.vocab_size},
          {"text_projection_dim", c.text_projection_dim},
          {"layer_norm_eps", c.layer_norm_eps}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.projection_dim = j.at("projection_dim").get<std::size_t>();
  c.g_layers = j.at("g_layers").get<std::vector<std::size_t>>();
  c.f_layers = j.at("f_layers").get<std::vector<std::size_t>>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.vse_enabled = j.at("vse_enabled").get<bool>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.text_projection_dim = j.at("text_projection_dim").get<std::size_t>();
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"beta1", c.beta1},                 {"beta2", c.beta2},
          {"eps_adam", c.eps_adam},           {"max_epochs", c.max_epochs},
          {"patience", c.patience},           {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps_adam = j.at("eps_adam").get<double>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

template <typename T>
void save_checkpoint(const ModelParams<T>& params, const TrainConfig& train_config,
                     const Vocabulary& vocab, const std::filesystem::path& path) {
  const nlohmann::json header = {{"model", to_json(params.config)},
                                 {"train", to_json(train_config)},
                                 {"vocabulary", vocab.tokens()}};
  const std::string text = header.dump();
  io::Writer w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint16_t>(sizeof(T)));
  w.put(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  std::uint32_t count = 0;
  params.visit([&count](const std::string&, const Tensor<T>&) { ++count; });
  w.put(count);
  params.visit([&w](const std::string& name, const Tensor<T>& t) {
    w.put_string16(name);
    w.put(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t extent : t.shape()) w.put(static_cast<std::uint32_t>(extent));
    w.put_bytes(t.data(), t.size() * sizeof(T));
  });
  w.save(path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  io::Reader r = io::Reader::load(path);
  const std::string where = path.string();
  char magic[4];
  if (!r.get_bytes(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw BadMagicError(where + ": not an FRNC checkpoint");
  }
  std::uint16_t version = 0, scalar_bytes = 0;
  if (!r.get(version)) throw TruncatedError(where + ": truncated header", 0);
  if (version != kCheckpointVersion) {
    throw VersionError(where + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::uint32_t header_len = 0;
  if (!r.get(scalar_bytes) || !r.get(header_len)) {
    throw TruncatedError(where + ": truncated header", 0);
  }
  if (scalar_bytes != sizeof(T)) {
    throw FormatError(where + ": checkpoint stores " + std::to_string(scalar_bytes * 8) +
                      "-bit parameters, loader expects " + std::to_string(sizeof(T) * 8));
  }
  std::string text(header_len, '\0');
  if (!r.get_bytes(text.data(), header_len)) {
    throw TruncatedError(where + ": truncated config header", 0);
  }
  Checkpoint<T> ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.params.config = model_config_from_json(header.at("model"));
    ckpt.train_config = train_config_from_json(header.at("train"));
    ckpt.vocab = Vocabulary(header.at("vocabulary").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": bad config header: " + e.what());
  }
  const ModelConfig& config = ckpt.params.config;
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(where + ": " + e.what());
  }
  if (config.vse_enabled && ckpt.vocab.size() != config.vocab_size) {
    throw FormatError(where + ": vocabulary size disagrees with the model config");
  }

  const auto expected = parameter_shapes(config);
  std::uint32_t count = 0;
  if (!r.get(count)) throw TruncatedError(where + ": truncated before tensors", 0);
  if (count != expected.size()) {
    throw ShapeHeaderError(where + ": " + std::to_string(count) + " tensors, config implies " +
                           std::to_string(expected.size()));
  }
  std::vector<Tensor<T>> tensors;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& [expected_name, expected_shape] = expected[i];
    std::string name;
    std::uint8_t rank = 0;
    if (!r.get_string16(name) || !r.get(rank)) {
      throw TruncatedError(where + ": truncated at tensor " + std::to_string(i), i);
    }
    Shape shape(rank);
    for (auto& extent : shape) {
      std::uint32_t e = 0;
      if (!r.get(e)) throw TruncatedError(where + ": truncated at tensor " + name, i);
      extent = e;
    }
    if (name != expected_name || shape != expected_shape) {
      throw ShapeHeaderError(where + ": tensor '" + name + "' has shape header " +
                             shape_str(shape) + ", expected '" + expected_name + "' " +
                             shape_str(expected_shape));
    }
    std::vector<T> data(shape_size(shape));
    if (!r.get_bytes(data.data(), data.size() * sizeof(T))) {
      throw TruncatedError(where + ": truncated in data of tensor " + name, i);
    }
    tensors.emplace_back(shape, std::move(data));
  }
  if (r.remaining() != 0) throw FormatError(where + ": trailing bytes after tensors");

  // Build the structure from the config, then fill it in visit order.
  ckpt.params = allocate_params<T>(ModelConfig(config));
  std::size_t k = 0;
  ckpt.params.visit([&](const std::string&, Tensor<T>& t) { t = std::move(tensors[k++]); });
  return ckpt;
}

#define FRN_INSTANTIATE(T)                                                                  \
  template void save_checkpoint(const ModelParams<T>&, const TrainConfig&, const Vocabulary&, \
                                const std::filesystem::path&);                              \
  template Checkpoint<T> load_checkpoint(const std::filesystem::path&);

FRN_INSTANTIATE(float)
FRN_INSTANTIATE(double)

#undef FRN_INSTANTIATE

}  // namespace frn
