#pragma once

#include <filesystem>

#include "frn/model.hpp"
#include "frn/training.hpp"
#include "frn/vocabulary.hpp"

namespace frn {

// Versioned container, little-endian:
//   "FRNC" | version u16 = 1 | scalar_bytes u16 (4 or 8) |
//   header_len u32 | header JSON (model config, train config, vocabulary) |
//   tensor_count u32 | tensor_count x [name (u16 len + bytes) | rank u8 |
//   rank x u32 extents | data]
// Tensors appear in ModelParams::visit() order and must match the shapes the
// embedded model config implies.
inline constexpr char kCheckpointMagic[4] = {'F', 'R', 'N', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  ModelParams<T> params;
  TrainConfig train_config;
  Vocabulary vocab;
};

template <typename T>
void save_checkpoint(const ModelParams<T>& params, const TrainConfig& train_config,
                     const Vocabulary& vocab, const std::filesystem::path& path);

// Throws BadMagicError, VersionError, TruncatedError (record = tensor index),
// ShapeHeaderError naming the tensor, or FormatError for a scalar-width mismatch.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace frn
